# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; ``dzm._pure`` holds the reference numpy versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, cos, sin, M_PI

cnp.import_array()


cdef inline double _smooth_step(double t) nogil:
    # C-infinity transition: 0 for t <= 0, 1 for t >= 1
    cdef double a, b
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = exp(-1.0 / t)
    b = exp(-1.0 / (1.0 - t))
    return a / (a + b)


def a_kernel_far_sum(double[:, ::1] targets, double L, double h, int n,
                     double complex[:, :, :, ::1] g, double r_in, double r_out):
    cdef Py_ssize_t m = targets.shape[0]
    out = np.zeros((m, 4), dtype=np.complex128)
    cdef double complex[:, ::1] res = out
    cdef Py_ssize_t t, i, j, k
    cdef double x0, x1, x2, d0, d1, d2, r2, r, w, vol = h * h * h
    cdef double width = r_out - r_in
    cdef double complex s0, s1, s2, s3, a0, a1, a2, a3, vm, vp
    for t in range(m):
        x0 = targets[t, 0]
        x1 = targets[t, 1]
        x2 = targets[t, 2]
        a0 = 0
        a1 = 0
        a2 = 0
        a3 = 0
        for i in range(n):
            d0 = x0 - (-L + h * i)
            for j in range(n):
                d1 = x1 - (-L + h * j)
                for k in range(n):
                    d2 = x2 - (-L + h * k)
                    r2 = d0 * d0 + d1 * d1 + d2 * d2
                    if r2 <= r_in * r_in:
                        continue
                    r = sqrt(r2)
                    if r < r_out:
                        w = 1.0 - _smooth_step((r_out - r) / width)
                    else:
                        w = 1.0
                    w = w * vol / (4.0 * M_PI * r2 * r)
                    s0 = g[i, j, k, 0]
                    s1 = g[i, j, k, 1]
                    s2 = g[i, j, k, 2]
                    s3 = g[i, j, k, 3]
                    vm = d0 - 1j * d1
                    vp = d0 + 1j * d1
                    a0 = a0 + w * (d2 * s2 + vm * s3)
                    a1 = a1 + w * (vp * s2 - d2 * s3)
                    a2 = a2 + w * (d2 * s0 + vm * s1)
                    a3 = a3 + w * (vp * s0 - d2 * s1)
        res[t, 0] = 1j * a0
        res[t, 1] = 1j * a1
        res[t, 2] = 1j * a2
        res[t, 3] = 1j * a3
    return out


def hs_mc_moments(double[:, ::1] x, double[:, ::1] u, double s, double sp,
                  double complex k1, double complex k2, bint diff,
                  double r_lo, double r_hi, double rho_lo, double rho_hi):
    """Sum and sum of squares of the importance-sampling estimator."""
    cdef Py_ssize_t N = x.shape[0], i
    cdef double tr = np.log(r_hi / r_lo), trho = np.log(rho_hi / rho_lo)
    cdef double rx2, ry2, rx, ry, rho, px, py, pu, wt, val, acc = 0.0, acc2 = 0.0
    cdef double y0, y1, y2, e1, e2, c
    cdef double complex ph1, ph2
    for i in range(N):
        y0 = x[i, 0] + u[i, 0]
        y1 = x[i, 1] + u[i, 1]
        y2 = x[i, 2] + u[i, 2]
        rx2 = x[i, 0] * x[i, 0] + x[i, 1] * x[i, 1] + x[i, 2] * x[i, 2]
        ry2 = y0 * y0 + y1 * y1 + y2 * y2
        rho = sqrt(u[i, 0] * u[i, 0] + u[i, 1] * u[i, 1] + u[i, 2] * u[i, 2])
        rx = sqrt(rx2)
        ry = sqrt(ry2)
        px = 0.0
        py = 0.0
        if rx >= r_lo and rx <= r_hi:
            px = 1.0 / (4.0 * M_PI * rx2 * rx * tr)
        if ry >= r_lo and ry <= r_hi:
            py = 1.0 / (4.0 * M_PI * ry2 * ry * tr)
        pu = 1.0 / (4.0 * M_PI * rho * rho * rho * trho)
        e1 = exp(-(k1.imag) * rho)
        ph1 = e1 * (cos(k1.real * rho) + 1j * sin(k1.real * rho))
        if diff:
            e2 = exp(-(k2.imag) * rho)
            ph2 = e2 * (cos(k2.real * rho) + 1j * sin(k2.real * rho))
            ph1 = ph1 - ph2
        c = ph1.real * ph1.real + ph1.imag * ph1.imag
        wt = (1.0 + rx2) ** (-sp) * (1.0 + ry2) ** (-s)
        val = wt * c / (16.0 * M_PI * M_PI * rho * rho) / (0.5 * (px + py) * pu)
        acc += val
        acc2 += val * val
    return acc, acc2
