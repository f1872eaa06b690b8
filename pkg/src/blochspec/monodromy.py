"""Characteristic determinant of the quasi-periodicity conditions.

The companion system of the differential expression is integrated over one
period from the canonical initial columns (the fundamental matrix equals the
identity at x = 0), so the quasi-periodicity mismatch determinant reduces to

    Delta(lam, t) = det(M(lam) - exp(it) I),

with M the monodromy matrix.  Delta is evaluated through the eigenvalues of
M as a scaled product over (zeta_i - exp(it)); the log-magnitude bookkeeping
keeps Newton corrections finite where the raw determinant would overflow
(entries of M grow like exp(|lam|^(1/n)) for eigenvalue indices well beyond
the Galerkin comfort zone).

This determinant is the oracle route: it never sees the Fourier-Galerkin
matrix, only the initial-value integration of the ODE system.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import IntegratorFailure, NoConvergence

_LOG_FLOOR = 1e-300


def monodromy_matrix(spec, lam, rtol=1e-12, atol=1e-14, max_steps=200000):
    """Fundamental matrix of the companion system at x = 1."""
    mat, _, status = kernels.propagate(
        spec.packed_modes(), spec.n, spec.m, complex(lam), rtol, atol, max_steps
    )
    if status != kernels.STATUS_OK:
        raise IntegratorFailure(
            f"propagation at lambda={lam} exceeded {max_steps} steps"
        )
    return mat


def monodromy_eigenvalues(spec, lam, **kw):
    return np.linalg.eigvals(monodromy_matrix(spec, lam, **kw))


@dataclass(frozen=True)
class _LogProduct:
    """A complex number stored as unit-phase * exp(log magnitude)."""

    phase: complex
    logmag: float

    def value(self):
        return self.phase * np.exp(self.logmag)

    def scaled(self, ref):
        return self.phase * np.exp(self.logmag - ref)


def _log_product(factors):
    mags = np.abs(factors)
    mags = np.maximum(mags, _LOG_FLOOR)
    phase = np.prod(factors / mags)
    return _LogProduct(phase=complex(phase), logmag=float(np.sum(np.log(mags))))


def _delta_from_zetas(zetas, z):
    return _log_product(zetas - z)


def _delta_t_from_zetas(zetas, z):
    """d Delta / dt = -i z * sum_j prod_{i != j} (zeta_i - z)."""
    f = zetas - z
    mags = np.maximum(np.abs(f), _LOG_FLOOR)
    logs = np.log(mags)
    phases = f / mags
    total_log = np.sum(logs)
    total_phase = np.prod(phases)
    acc = 0.0
    ref = total_log - np.min(logs)
    for jj in range(len(f)):
        acc += (total_phase / phases[jj]) * np.exp(total_log - logs[jj] - ref)
    return _LogProduct(phase=complex(-1j * z * acc), logmag=float(ref))


def characteristic_determinant(spec, lam, t, rtol=1e-12, atol=1e-14):
    """det(M(lam) - exp(it) I).  May overflow to inf for very large |lam|;
    the refinement routines use the internally scaled representation."""
    zetas = monodromy_eigenvalues(spec, lam, rtol=rtol, atol=atol)
    return complex(_delta_from_zetas(zetas, np.exp(1j * t)).value())


@dataclass(frozen=True)
class DetJet:
    """Delta and its derivatives at (lam, t), jointly scaled by exp(-ref)."""

    ref: float
    d: complex
    d_lam: complex
    d_t: complex
    d_lam_lam: complex
    d_lam_t: complex


def det_jet(spec, lam, t, dlam=None, rtol=1e-12, atol=1e-14):
    """Scaled (Delta, Delta_lam, Delta_t, Delta_lamlam, Delta_lamt).

    The t-derivatives are analytic in the monodromy eigenvalues; the
    lam-derivatives use central differences with step ``dlam``.
    """
    if dlam is None:
        dlam = 1e-6 * (1.0 + abs(lam))
    z = np.exp(1j * t)
    z0 = monodromy_eigenvalues(spec, lam, rtol=rtol, atol=atol)
    zp = monodromy_eigenvalues(spec, lam + dlam, rtol=rtol, atol=atol)
    zm = monodromy_eigenvalues(spec, lam - dlam, rtol=rtol, atol=atol)
    parts = {
        "d0": _delta_from_zetas(z0, z),
        "dp": _delta_from_zetas(zp, z),
        "dm": _delta_from_zetas(zm, z),
        "t0": _delta_t_from_zetas(z0, z),
        "tp": _delta_t_from_zetas(zp, z),
        "tm": _delta_t_from_zetas(zm, z),
    }
    ref = max(p.logmag for p in parts.values())
    v = {k: p.scaled(ref) for k, p in parts.items()}
    return DetJet(
        ref=ref,
        d=v["d0"],
        d_lam=(v["dp"] - v["dm"]) / (2 * dlam),
        d_t=v["t0"],
        d_lam_lam=(v["dp"] - 2 * v["d0"] + v["dm"]) / dlam**2,
        d_lam_t=(v["tp"] - v["tm"]) / (2 * dlam),
    )


def newton_correction(spec, lam, t, dlam=None, rtol=1e-12, atol=1e-14):
    """|Delta / (d Delta / d lam)| at (lam, t), overflow-safe."""
    jet = det_jet(spec, lam, t, dlam=dlam, rtol=rtol, atol=atol)
    if jet.d_lam == 0:
        return np.inf
    return abs(jet.d / jet.d_lam)


def refine_eigenvalue(
    spec, t, lam0, tol=1e-10, max_iter=40, dlam=None, rtol=1e-12, atol=1e-14
):
    """Polish a fiber-eigenvalue estimate by Newton iteration on Delta(., t).

    Stops when the Newton correction drops below tol * (1 + |lam|).
    """
    lam = complex(lam0)
    for _ in range(max_iter):
        jet = det_jet(spec, lam, t, dlam=dlam, rtol=rtol, atol=atol)
        if jet.d_lam == 0:
            raise NoConvergence(f"flat determinant at lambda={lam}")
        step = jet.d / jet.d_lam
        lam = lam - step
        if abs(step) <= tol * (1.0 + abs(lam)):
            return lam
    raise NoConvergence(
        f"eigenvalue refinement from {lam0} did not reach tol={tol} "
        f"in {max_iter} iterations (last step {abs(step):.3e})"
    )
