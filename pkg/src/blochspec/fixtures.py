"""Built-in operators and input functions used by the verification suite
and the CLI ``verify`` command."""

import numpy as np

from .gelfand import CellFunction
from .operators import FourierMatrixSeries, OperatorSpec


def free_operator(n=2, m=1):
    """All coefficients zero: eigenvalues (i(2 pi k + t))^n exactly."""
    return OperatorSpec(n=n, m=m, coeffs={})


def constant_coefficient(mu=(0.0, 1.0), n=2):
    """P_2 = diag(mu) constant; the closed-form eigenpairs are exact."""
    c = np.diag(np.asarray(mu, dtype=np.complex128))
    return OperatorSpec(n=n, m=len(mu), coeffs={2: FourierMatrixSeries.constant(c)})


def perturbed_operator(mu=(0.0, 1.0), eps=1e-2, n=2, seed=7):
    """diag(mu) plus a random zero-mean bandwidth-1 perturbation of size eps."""
    m = len(mu)
    rng = np.random.default_rng(seed)
    b1 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    b2 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    series = FourierMatrixSeries.from_modes(
        {0: np.diag(np.asarray(mu, dtype=np.complex128)), 1: eps * b1, -1: eps * b2},
        m,
    )
    return OperatorSpec(n=n, m=m, coeffs={2: series})


def skew_coupling_operator(mu=(0.0, 1.0), eps=0.05):
    """diag(mu) plus eps*(E21 exp(4i pi x) - E12 exp(-4i pi x)).

    The q = +/-2 modes couple the two branches that cross near
    t = (mu_2 - mu_1)/(8 pi) in both directions with coupling product < 0, so
    the crossing splits into a pair of real branch points where |alpha|
    vanishes like |t - t_j|^(1/2).
    """
    m = len(mu)
    e21 = np.zeros((m, m), dtype=np.complex128)
    e21[1, 0] = 1.0
    e12 = np.zeros((m, m), dtype=np.complex128)
    e12[0, 1] = 1.0
    series = FourierMatrixSeries.from_modes(
        {0: np.diag(np.asarray(mu, dtype=np.complex128)), 2: eps * e21, -2: -eps * e12},
        m,
    )
    return OperatorSpec(n=2, m=m, coeffs={2: series})


def one_sided_scalar(eps=0.5):
    """Scalar operator with the single raising mode eps*exp(2i pi x); its
    spectrum equals the free one while every periodic/antiperiodic eigenvalue
    carries a nontrivial Jordan structure."""
    series = FourierMatrixSeries.from_modes({1: np.array([[eps]])}, 1)
    return OperatorSpec(n=2, m=1, coeffs={2: series})


def indicator_function(m=1, component=0):
    """f = e_component on [0, 1), zero elsewhere."""
    vals = np.zeros((1, m), dtype=np.complex128)
    vals[0, component] = 1.0
    return CellFunction.constant_cells(vals, start=0)


def bump_function(m=1, component=0, amplitudes=(0.3, 1.0, 1.0, 0.3), start=-2):
    """Continuous 4-cell bump: amplitude * sin^2(pi u) per cell, which is the
    band-limited profile (1 - cos(2 pi u))/2 with modes q = 0, +/-1."""
    n_cells = len(amplitudes)
    modes = np.zeros((n_cells, 3, m), dtype=np.complex128)
    for c, a in enumerate(amplitudes):
        modes[c, 1, component] = 0.5 * a
        modes[c, 0, component] = -0.25 * a
        modes[c, 2, component] = -0.25 * a
    return CellFunction(start, modes)
