import json

import numpy as np
import pytest

from blochspec.errors import DegenerateMeanMatrix, MalformedSpec
from blochspec.operators import (
    FourierMatrixSeries,
    OperatorSpec,
    load_operator,
    operator_from_dict,
    operator_to_dict,
    quasiperiodic_norm_factor,
    save_operator,
    unperturbed_eigenpair,
    unperturbed_eigenvalue,
    validate_spec,
    wrap_quasimomentum,
)

PI = np.pi


def diag_operator(entries, extra_modes=None):
    mode_map = {0: np.diag(np.asarray(entries, dtype=complex))}
    if extra_modes:
        mode_map.update(extra_modes)
    m = len(entries)
    return OperatorSpec(n=2, m=m, coeffs={2: FourierMatrixSeries.from_modes(mode_map, m)})


def test_validate_constant_diagonal():
    sys = validate_spec(diag_operator([1.0, 4.0]))
    assert np.allclose(sys.mu, [1.0, 4.0])
    assert np.allclose(sys.v, np.eye(2))
    assert np.allclose(sys.u, np.eye(2))


def test_zero_mean_mode_leaves_C_bit_identical():
    b = np.array([[0.3, 1.2], [-0.7, 0.1j]])
    plain = diag_operator([1.0, 4.0])
    osc = diag_operator([1.0, 4.0], {1: b})
    assert np.array_equal(plain.mean_matrix(), osc.mean_matrix())
    sys = validate_spec(osc)
    assert np.allclose(sys.mu, [1.0, 4.0])


def test_jordan_block_rejected():
    c = np.array([[0.0, 1.0], [0.0, 0.0]])
    spec = OperatorSpec(n=2, m=2, coeffs={2: FourierMatrixSeries.constant(c)})
    with pytest.raises(DegenerateMeanMatrix):
        validate_spec(spec)


def test_malformed_dimensions():
    with pytest.raises(MalformedSpec):
        OperatorSpec(n=1, m=1, coeffs={})
    with pytest.raises(MalformedSpec):
        OperatorSpec(n=2, m=0, coeffs={})
    with pytest.raises(MalformedSpec):
        OperatorSpec(
            n=2, m=2, coeffs={2: FourierMatrixSeries.constant(np.eye(3))}
        )
    with pytest.raises(MalformedSpec):
        OperatorSpec(n=2, m=1, coeffs={5: FourierMatrixSeries.constant([[1.0]])})


def test_eq4_values_at_pi():
    sys = validate_spec(diag_operator([1.0, 4.0]))
    lam1 = unperturbed_eigenvalue(sys, 2, 0, 1, PI)
    lam2 = unperturbed_eigenvalue(sys, 2, 0, 2, PI)
    assert lam1 == pytest.approx(-PI**2 + 1, abs=1e-12)
    assert lam2 == pytest.approx(-PI**2 + 4, abs=1e-12)
    assert lam1 == pytest.approx(-8.869604401089358, abs=1e-12)
    assert lam2 == pytest.approx(-5.869604401089358, abs=1e-12)


def test_free_eigenvalue():
    sys = validate_spec(OperatorSpec(n=2, m=1, coeffs={}))
    lam = unperturbed_eigenvalue(sys, 2, 1, 1, PI / 2)
    assert lam == pytest.approx(-25 * PI**2 / 4, rel=1e-14)


def test_crossing_equality_at_paper_quasimomentum():
    # branches (k=1, j=2) and (k=-1, j=1) of mu = {0, 1} collide exactly at
    # t = (mu_2 - mu_1) / (8 pi); the shared value has the closed form
    # -4 pi^2 + 1/2 - 1/(64 pi^2)
    sys = validate_spec(diag_operator([0.0, 1.0]))
    t = 1.0 / (8 * PI)
    a = unperturbed_eigenvalue(sys, 2, 1, 2, t)
    b = unperturbed_eigenvalue(sys, 2, -1, 1, t)
    closed = -4 * PI**2 + 0.5 - 1.0 / (64 * PI**2)
    assert abs(a - b) < 1e-12
    assert a == pytest.approx(closed, rel=1e-14)
    assert a == pytest.approx(-38.98000074785185, abs=1e-10)


def test_pi_family_crossing():
    sys = validate_spec(diag_operator([0.0, 1.0]))
    t = PI + 1.0 / (12 * PI)
    a = unperturbed_eigenvalue(sys, 2, 1, 2, t)
    b = unperturbed_eigenvalue(sys, 2, -2, 1, t)
    assert abs(a - b) < 1e-12


def test_fiber_periodicity_shifts_mode_index(rng):
    sys = validate_spec(diag_operator([0.3 + 0.1j, -1.2]))
    for _ in range(20):
        k = int(rng.integers(-6, 7))
        j = int(rng.integers(1, 3))
        n = int(rng.integers(2, 4))
        t = float(rng.uniform(0, 2 * PI))
        a = unperturbed_eigenvalue(sys, n, k, j, t + 2 * PI)
        b = unperturbed_eigenvalue(sys, n, k + 1, j, t)
        assert abs(a - b) <= 1e-9 * (1 + abs(b))


def test_biorthogonality_random_matrices(rng):
    for _ in range(10):
        c = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        spec = OperatorSpec(n=2, m=3, coeffs={2: FourierMatrixSeries.constant(c)})
        sys = validate_spec(spec)
        gram = sys.u.conj().T @ sys.v  # <u_i, v_j> = conj(u_i) . v_j
        assert np.max(np.abs(np.diag(gram) - 1)) < 1e-12
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) < 1e-10
        for j in range(3):
            res = np.linalg.norm(c @ sys.v[:, j] - sys.mu[j] * sys.v[:, j])
            assert res <= 1e-10 * (1 + np.linalg.norm(c, 2))


def test_eigenpair_profile():
    sys = validate_spec(diag_operator([1.0, 4.0]))
    lam, prof = unperturbed_eigenpair(sys, 2, 3, 2, 0.7, K=5)
    assert prof.shape == (11, 2)
    assert np.count_nonzero(prof) == 1
    assert prof[3 + 5, 1] == pytest.approx(1.0)
    assert lam == pytest.approx(unperturbed_eigenvalue(sys, 2, 3, 2, 0.7))


def test_norm_factor_matches_quadrature():
    xs = np.linspace(0, 1, 20001)
    for t in (0.3 + 0.2j, 1.0 - 0.15j, 2.0):
        num = np.trapezoid(np.abs(np.exp(1j * t * xs)) ** 2, xs)
        assert quasiperiodic_norm_factor(t) == pytest.approx(num ** (-0.5), rel=1e-7)
    assert quasiperiodic_norm_factor(1.0) == 1.0
    # removable singularity: smooth through Im t = 0
    vals = [quasiperiodic_norm_factor(1.0 + 1j * s) for s in (1e-13, 1e-9, 1e-6)]
    assert np.allclose(vals, 1.0, atol=1e-5)


def test_series_evaluation_periodic(rng):
    series = FourierMatrixSeries.from_modes(
        {q: rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for q in (-2, 0, 1)},
        2,
    )
    x = rng.uniform(0, 1, 5)
    assert np.allclose(series(x), series(x + 1.0), atol=1e-12)


def test_wrap_quasimomentum():
    h = 0.05
    assert wrap_quasimomentum(2 * PI + 0.3, h) == pytest.approx(0.3)
    assert wrap_quasimomentum(-0.01, h) == pytest.approx(-0.01)
    assert wrap_quasimomentum(2 * PI - h, h) == pytest.approx(2 * PI - h)
    assert wrap_quasimomentum(-h, h) == pytest.approx(2 * PI - h)


def test_operator_file_roundtrip(tmp_path, rng):
    b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    spec = OperatorSpec(
        n=3,
        m=2,
        coeffs={
            2: FourierMatrixSeries.from_modes({0: np.diag([0.0, 1.0]), 1: b}, 2),
            3: FourierMatrixSeries.from_modes({-2: 0.5 * b}, 2),
        },
    )
    path = tmp_path / "op.json"
    save_operator(spec, path)
    back = load_operator(path)
    assert back.n == 3 and back.m == 2
    for nu in (2, 3):
        assert np.allclose(
            back.coefficient(nu).modes, spec.coefficient(nu).modes, atol=0
        )


def test_operator_file_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(MalformedSpec):
        load_operator(path)
    path.write_text(json.dumps({"m": 2}))
    with pytest.raises(MalformedSpec):
        load_operator(path)
    doc = {
        "n": 2,
        "m": 2,
        "coefficients": [{"nu": 2, "modes": [{"q": 0, "matrix": [[1, 2]]}]}],
    }
    path.write_text(json.dumps(doc))
    with pytest.raises(MalformedSpec):
        load_operator(path)


def test_to_dict_skips_zero_modes():
    spec = diag_operator([1.0, 2.0], {3: np.zeros((2, 2))})
    doc = operator_to_dict(spec)
    qs = [m["q"] for m in doc["coefficients"][0]["modes"]]
    assert qs == [0]
    back = operator_from_dict(doc)
    assert back.coefficient(2).bandwidth == 0  # zero modes are not persisted
