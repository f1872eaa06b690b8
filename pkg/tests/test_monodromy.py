import numpy as np
import pytest

from blochspec.errors import NoConvergence
from blochspec.fixtures import constant_coefficient, free_operator, perturbed_operator
from blochspec.monodromy import (
    characteristic_determinant,
    det_jet,
    newton_correction,
    refine_eigenvalue,
)
from blochspec.operators import unperturbed_eigenvalue, validate_spec

PI = np.pi


def free_delta(lam, t):
    s = np.sqrt(complex(-lam))
    return np.exp(2j * t) - 2 * np.exp(1j * t) * np.cos(s) + 1.0


def test_free_determinant_root_at_quarter_lattice(free_op):
    val = characteristic_determinant(free_op, -((PI / 2) ** 2), PI / 2)
    assert abs(val) < 1e-9


def test_free_determinant_periodic_zero(free_op):
    assert abs(characteristic_determinant(free_op, 0.0, 0.0)) < 1e-12


def test_free_determinant_nonzero(free_op):
    val = characteristic_determinant(free_op, -(PI**2), 0.0)
    assert val == pytest.approx(4.0, abs=1e-9)


def test_free_determinant_formula_sweep(free_op, rng):
    for _ in range(12):
        lam = complex(rng.uniform(-80, 5), rng.uniform(-3, 3))
        t = rng.uniform(0, 2 * PI)
        got = characteristic_determinant(free_op, lam, t)
        assert got == pytest.approx(free_delta(lam, t), rel=1e-8, abs=1e-9)


def test_refine_free_eigenvalue(free_op):
    target = -((2 * PI + 1.0) ** 2)
    lam = refine_eigenvalue(free_op, 1.0, target * (1 + 1e-3))
    assert abs(lam - target) <= 1e-10 * (1 + abs(target)) * 10


def test_refine_recovers_closed_form(const_op):
    sys = validate_spec(const_op)
    target = unperturbed_eigenvalue(sys, 2, 1, 2, 0.8)
    lam = refine_eigenvalue(const_op, 0.8, target + 1e-3)
    assert abs(lam - target) <= 1e-9 * (1 + abs(target))


def test_refine_no_convergence(const_op):
    with pytest.raises(NoConvergence):
        refine_eigenvalue(const_op, 0.8, -35.0, max_iter=1)


def test_newton_correction_small_at_root(const_op):
    sys = validate_spec(const_op)
    lam = unperturbed_eigenvalue(sys, 2, 2, 1, 1.3)
    corr = newton_correction(const_op, lam, 1.3)
    assert corr <= 1e-8 * (1 + abs(lam))


def test_det_jet_t_derivative_matches_difference(const_op):
    lam, t = -20.0 + 0.3j, 0.9
    jet = det_jet(const_op, lam, t)
    dt = 1e-6
    dp = characteristic_determinant(const_op, lam, t + dt)
    dm = characteristic_determinant(const_op, lam, t - dt)
    want = (dp - dm) / (2 * dt)
    got = jet.d_t * np.exp(jet.ref)
    assert got == pytest.approx(want, rel=1e-6)


def test_scaled_jet_finite_for_large_lambda():
    spec = constant_coefficient((0.0, 1.0), n=3)
    lam = unperturbed_eigenvalue(validate_spec(spec), 3, 12, 1, 0.9)
    jet = det_jet(spec, lam, 0.9)
    assert np.isfinite(jet.d) and np.isfinite(jet.d_lam)
    assert jet.ref > 50  # raw determinant is astronomically large here
    # the Newton correction stays a sane relative quantity
    corr = abs(jet.d / jet.d_lam)
    assert corr <= 1e-4 * (1 + abs(lam))


def test_perturbed_roots_match_galerkin(perturbed_op):
    # the two independent discretizations agree on every moderate eigenvalue
    from blochspec.solver import solve_bloch

    sp = solve_bloch(perturbed_op, 1.0, 12)
    checked = 0
    for pair in sp.pairs:
        if abs(pair.k) > 4 or not pair.asymptotic:
            continue
        lam = refine_eigenvalue(perturbed_op, 1.0, pair.lam)
        assert abs(lam - pair.lam) <= 1e-8 * (1 + abs(lam))
        checked += 1
    assert checked >= 4
