import numpy as np
import pytest
import scipy.linalg

from blochspec import kernels
from blochspec.fixtures import constant_coefficient, perturbed_operator
from blochspec.kernels import fallback
from blochspec.kernels.tableau import A, B8, C


def companion_matrix(spec, lam, x=0.0):
    n, m = spec.n, spec.m
    d = n * m
    a = np.zeros((d, d), dtype=complex)
    a[: d - m, m:] = np.eye(d - m)
    a[d - m :, :m] = lam * np.eye(m)
    for nu in range(2, n + 1):
        p = spec.coefficient(nu)(x)
        r = (n - nu) * m
        a[d - m :, r : r + m] -= p
    return a


def test_tableau_consistency():
    assert np.allclose(A.sum(axis=1), C, atol=1e-15)
    assert B8.sum() == pytest.approx(1.0, abs=1e-15)


def test_constant_system_matches_expm(rng):
    c = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    spec = constant_coefficient((0.0, 1.0))
    spec = type(spec)(n=2, m=2, coeffs={2: spec.coeffs[2].constant(c)})
    for lam in (-7.3 + 0.4j, 2.0, -120.0):
        got, _, status = fallback.propagate(spec.packed_modes(), 2, 2, lam)
        assert status == kernels.STATUS_OK
        ref = scipy.linalg.expm(companion_matrix(spec, lam))
        assert np.max(np.abs(got - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_free_hill_closed_form():
    spec = constant_coefficient((0.0,))
    for lam in (-((np.pi / 2) ** 2), -9.0, -150.0):
        got, _, _ = fallback.propagate(spec.packed_modes(), 2, 1, lam)
        s = np.sqrt(-lam)
        ref = np.array(
            [[np.cos(s), np.sin(s) / s], [-s * np.sin(s), np.cos(s)]]
        )
        assert np.max(np.abs(got - ref)) < 1e-11 * max(1.0, np.max(np.abs(ref)))


def test_backend_equivalence():
    backends = kernels.available_backends()
    if "compiled" not in backends:
        pytest.skip("compiled extension not built")
    spec = perturbed_operator(eps=0.3)
    modes = spec.packed_modes()
    for lam in (-30.0 + 1.5j, -500.0, 3.7j):
        m1, s1, _ = backends["python"](modes, 2, 2, lam)
        m2, s2, _ = backends["compiled"](modes, 2, 2, lam)
        assert s1 == s2  # identical step sequences
        assert np.max(np.abs(m1 - m2)) < 1e-12 * max(1.0, np.max(np.abs(m1)))


def test_tolerance_controls_error():
    spec = perturbed_operator(eps=0.5)
    modes = spec.packed_modes()
    lam = -40.0 + 2.0j
    ref, _, _ = kernels.propagate(modes, 2, 2, lam, 1e-13, 1e-15)
    errs = []
    for rtol in (1e-6, 1e-9, 1e-12):
        got, _, _ = kernels.propagate(modes, 2, 2, lam, rtol, 1e-15)
        errs.append(np.max(np.abs(got - ref)))
    assert errs[0] < 1e-4
    assert errs[2] < errs[0]
    assert errs[2] < 1e-10


def test_max_steps_status():
    spec = perturbed_operator(eps=0.5)
    _, _, status = kernels.propagate(spec.packed_modes(), 2, 2, -40.0, 1e-12, 1e-14, 3)
    assert status == kernels.STATUS_TOO_MANY_STEPS


def test_third_order_system(rng):
    c = rng.standard_normal((1, 1)) + 1j * rng.standard_normal((1, 1))
    from blochspec.operators import FourierMatrixSeries, OperatorSpec

    spec = OperatorSpec(
        n=3,
        m=1,
        coeffs={2: FourierMatrixSeries.constant(c), 3: FourierMatrixSeries.constant(0.4 * c)},
    )
    lam = -200.0 + 3.0j
    got, _, _ = kernels.propagate(spec.packed_modes(), 3, 1, lam)
    ref = scipy.linalg.expm(companion_matrix(spec, lam))
    assert np.max(np.abs(got - ref)) < 1e-9 * np.max(np.abs(ref))
