"""Pure-NumPy monodromy propagator.

Integrates the fundamental matrix U' = Acomp(x) U of the companion system of

    y^(n) + P_2(x) y^(n-2) + ... + P_n(x) y = lam * y

from x = 0 to x = 1 with U(0) = I, using the adaptive Fehlberg 7(8) pair from
``tableau``.  The compiled extension implements the same algorithm; this
module is the import-time fallback and the reference for equivalence tests.
"""

import numpy as np

from .tableau import A, B8, C, ERR_W, STAGES

STATUS_OK = 0
STATUS_TOO_MANY_STEPS = 1


def _rhs(x, u, modes, n, m, lam, qs):
    """Companion-system right-hand side applied to a matrix of columns."""
    d = n * m
    du = np.empty_like(u)
    du[: d - m] = u[m:]
    phases = np.exp(2j * np.pi * x * qs)
    top = lam * u[:m]
    for iv in range(n - 1):
        p = np.tensordot(phases, modes[iv], axes=(0, 0))
        r = (n - (iv + 2)) * m
        top = top - p @ u[r : r + m]
    du[d - m :] = top
    return du


def propagate(modes, n, m, lam, rtol=1e-12, atol=1e-14, max_steps=100000):
    """Return (monodromy_matrix, steps, status)."""
    modes = np.ascontiguousarray(modes, dtype=np.complex128)
    q_half = (modes.shape[1] - 1) // 2
    qs = np.arange(-q_half, q_half + 1, dtype=float)
    d = n * m
    u = np.eye(d, dtype=np.complex128)
    lam = complex(lam)

    x = 0.0
    h = min(1e-2 / (1.0 + abs(lam) ** (1.0 / n)), 0.1)
    k = np.empty((STAGES, d, d), dtype=np.complex128)
    steps = 0
    while x < 1.0:
        if steps >= max_steps:
            return u, steps, STATUS_TOO_MANY_STEPS
        h = min(h, 1.0 - x)
        for s in range(STAGES):
            y = u.copy()
            for r in range(s):
                a = A[s, r]
                if a != 0.0:
                    y += (h * a) * k[r]
            k[s] = _rhs(x + C[s] * h, y, modes, n, m, lam, qs)
        u8 = u.copy()
        for s in range(STAGES):
            b = B8[s]
            if b != 0.0:
                u8 += (h * b) * k[s]
        err = (h * ERR_W) * (k[0] + k[10] - k[11] - k[12])
        scale = atol + rtol * max(np.max(np.abs(u)), np.max(np.abs(u8)))
        err_norm = np.max(np.abs(err)) / scale
        steps += 1
        if err_norm <= 1.0:
            u = u8
            x += h
            factor = 4.0 if err_norm == 0.0 else min(4.0, 0.9 * err_norm ** (-0.125))
        else:
            factor = max(0.2, 0.9 * err_norm ** (-0.125))
        h *= factor
    return u, steps, STATUS_OK
