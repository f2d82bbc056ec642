"""Numpy implementations of the compiled kernels in ``_core.pyx``.

Signatures and results match the extension; they are used when the
extension is not built or when ``DZM_PURE_PYTHON=1``.
"""

import numpy as np

from dzm.algebra import alpha_dot


def smooth_step(t):
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


def a_kernel_far_sum(targets, L, h, n, g, r_in, r_out):
    targets = np.asarray(targets, dtype=float)
    axis = -L + h * np.arange(n)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    gv = np.asarray(g).reshape(-1, 4)
    out = np.zeros((targets.shape[0], 4), dtype=complex)
    width = r_out - r_in
    for t, x0 in enumerate(targets):
        d = x0 - grid
        r = np.sqrt(np.sum(d * d, axis=1))
        keep = r > r_in
        d, r, gk = d[keep], r[keep], gv[keep]
        w = np.where(r < r_out, 1.0 - smooth_step((r_out - r) / width), 1.0)
        w = w * h**3 / (4.0 * np.pi * r**3)
        out[t] = 1j * np.sum(w[:, None] * alpha_dot(d, gk), axis=0)
    return out


def hs_mc_moments(x, u, s, sp, k1, k2, diff, r_lo, r_hi, rho_lo, rho_hi):
    y = x + u
    rx2 = np.sum(x * x, axis=1)
    ry2 = np.sum(y * y, axis=1)
    rho = np.sqrt(np.sum(u * u, axis=1))
    rx, ry = np.sqrt(rx2), np.sqrt(ry2)
    tr = np.log(r_hi / r_lo)
    trho = np.log(rho_hi / rho_lo)
    px = np.where((rx >= r_lo) & (rx <= r_hi), 1.0 / (4 * np.pi * rx2 * rx * tr), 0.0)
    py = np.where((ry >= r_lo) & (ry <= r_hi), 1.0 / (4 * np.pi * ry2 * ry * tr), 0.0)
    pu = 1.0 / (4 * np.pi * rho**3 * trho)
    ph = np.exp(1j * k1 * rho)
    if diff:
        ph = ph - np.exp(1j * k2 * rho)
    c = np.abs(ph) ** 2
    wt = (1.0 + rx2) ** (-sp) * (1.0 + ry2) ** (-s)
    val = wt * c / (16 * np.pi**2 * rho**2) / (0.5 * (px + py) * pu)
    return float(val.sum()), float((val * val).sum())
