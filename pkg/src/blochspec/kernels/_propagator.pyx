# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled monodromy propagator (same algorithm as kernels.fallback)."""

import numpy as np

cimport cython
from libc.math cimport cos, sin

from .tableau import A as _A_py, B8 as _B8_py, C as _C_py, ERR_W as _ERR_W_py

cdef double[:, ::1] A_TAB = np.ascontiguousarray(_A_py)
cdef double[::1] B8_TAB = np.ascontiguousarray(_B8_py)
cdef double[::1] C_TAB = np.ascontiguousarray(_C_py)
cdef double ERR_W = _ERR_W_py
cdef int STAGES = 13

STATUS_OK = 0
STATUS_TOO_MANY_STEPS = 1

cdef double TWO_PI = 6.283185307179586476925286766559


cdef void _rhs(double x,
               double complex[:, ::1] u,
               double complex[:, ::1] du,
               double complex[:, :, :, ::1] modes,
               int n, int m, double complex lam, int qhalf,
               double complex[:, ::1] pmat) noexcept:
    cdef int d = n * m
    cdef int i, j, l, iv, q, r
    cdef double ang
    cdef double complex ph, acc

    for i in range(d - m):
        for j in range(d):
            du[i, j] = u[i + m, j]
    for i in range(m):
        for j in range(d):
            du[d - m + i, j] = lam * u[i, j]
    for iv in range(n - 1):
        for i in range(m):
            for l in range(m):
                pmat[i, l] = 0
        for q in range(-qhalf, qhalf + 1):
            ang = TWO_PI * q * x
            ph = cos(ang) + 1j * sin(ang)
            for i in range(m):
                for l in range(m):
                    pmat[i, l] = pmat[i, l] + ph * modes[iv, q + qhalf, i, l]
        r = (n - (iv + 2)) * m
        for i in range(m):
            for j in range(d):
                acc = 0
                for l in range(m):
                    acc = acc + pmat[i, l] * u[r + l, j]
                du[d - m + i, j] = du[d - m + i, j] - acc


def propagate(modes, int n, int m, lam, double rtol=1e-12, double atol=1e-14,
              int max_steps=100000):
    """Return (monodromy_matrix, steps, status)."""
    cdef double complex[:, :, :, ::1] mv = np.ascontiguousarray(modes, dtype=np.complex128)
    cdef int qhalf = (mv.shape[1] - 1) // 2
    cdef int d = n * m
    cdef double complex clam = lam

    u_arr = np.eye(d, dtype=np.complex128)
    cdef double complex[:, ::1] u = u_arr
    k_arr = np.empty((STAGES, d, d), dtype=np.complex128)
    cdef double complex[:, :, ::1] k = k_arr
    y_arr = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] y = y_arr
    u8_arr = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] u8 = u8_arr
    p_arr = np.empty((m, m), dtype=np.complex128)
    cdef double complex[:, ::1] pmat = p_arr

    cdef double x = 0.0
    cdef double h = 1e-2 / (1.0 + abs(clam) ** (1.0 / n))
    if h > 0.1:
        h = 0.1
    cdef int steps = 0
    cdef int s, r, i, j
    cdef double a, b, umax, emax, v, scale, err_norm, factor

    while x < 1.0:
        if steps >= max_steps:
            return u_arr, steps, STATUS_TOO_MANY_STEPS
        if h > 1.0 - x:
            h = 1.0 - x
        for s in range(STAGES):
            for i in range(d):
                for j in range(d):
                    y[i, j] = u[i, j]
            for r in range(s):
                a = A_TAB[s, r]
                if a != 0.0:
                    for i in range(d):
                        for j in range(d):
                            y[i, j] = y[i, j] + (h * a) * k[r, i, j]
            _rhs(x + C_TAB[s] * h, y, k[s], mv, n, m, clam, qhalf, pmat)
        for i in range(d):
            for j in range(d):
                u8[i, j] = u[i, j]
        for s in range(STAGES):
            b = B8_TAB[s]
            if b != 0.0:
                for i in range(d):
                    for j in range(d):
                        u8[i, j] = u8[i, j] + (h * b) * k[s, i, j]
        umax = 0.0
        emax = 0.0
        for i in range(d):
            for j in range(d):
                v = abs(u[i, j])
                if v > umax:
                    umax = v
                v = abs(u8[i, j])
                if v > umax:
                    umax = v
                v = abs(k[0, i, j] + k[10, i, j] - k[11, i, j] - k[12, i, j])
                if v > emax:
                    emax = v
        emax = emax * h * ERR_W
        scale = atol + rtol * umax
        err_norm = emax / scale
        steps += 1
        if err_norm <= 1.0:
            for i in range(d):
                for j in range(d):
                    u[i, j] = u8[i, j]
            x += h
            if err_norm == 0.0:
                factor = 4.0
            else:
                factor = 0.9 * err_norm ** (-0.125)
                if factor > 4.0:
                    factor = 4.0
        else:
            factor = 0.9 * err_norm ** (-0.125)
            if factor < 0.2:
                factor = 0.2
        h *= factor
    return u_arr, steps, STATUS_OK
