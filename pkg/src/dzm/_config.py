import os


def thread_cap() -> int:
    """Worker count for FFTs and batched loops; ``DZM_THREADS`` caps it."""
    cpus = os.cpu_count() or 1
    raw = os.environ.get("DZM_THREADS")
    if not raw:
        return cpus
    try:
        cap = int(raw)
    except ValueError:
        return cpus
    return max(1, min(cap, cpus))
