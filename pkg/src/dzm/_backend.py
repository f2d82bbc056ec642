"""Selects the compiled core when available, else the numpy fallback."""

import os

from dzm import _pure

if os.environ.get("DZM_PURE_PYTHON") == "1":
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from dzm import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "python"

a_kernel_far_sum = _impl.a_kernel_far_sum
hs_mc_moments = _impl.hs_mc_moments
