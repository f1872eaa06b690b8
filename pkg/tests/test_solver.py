import numpy as np
import pytest

from blochspec.errors import TruncationTooSmall
from blochspec.fixtures import constant_coefficient, free_operator, perturbed_operator
from blochspec.monodromy import newton_correction
from blochspec.operators import (
    FourierMatrixSeries,
    OperatorSpec,
    unperturbed_eigenvalue,
    validate_spec,
)
from blochspec.solver import (
    assemble_bloch_matrix,
    asymptotic_residuals,
    band_table_from_json,
    band_table_to_csv,
    band_table_to_json,
    disk_census,
    solve_bloch,
    track_bands,
)

PI = np.pi


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def test_assemble_free_diagonal(free_op):
    a = assemble_bloch_matrix(free_op, 0.0, 1)
    assert np.allclose(a, np.diag([-4 * PI**2, 0.0, -4 * PI**2]))


def test_assemble_constant_block_closed_form(const_op):
    K, t = 3, 0.7
    a = assemble_bloch_matrix(const_op, t, K)
    c = const_op.mean_matrix()
    for p in range(-K, K + 1):
        z = 1j * (2 * PI * p + t)
        block = a[(p + K) * 2 : (p + K) * 2 + 2, (p + K) * 2 : (p + K) * 2 + 2]
        assert np.allclose(block, z**2 * np.eye(2) + c, atol=1e-12)
    off = a - np.kron(np.eye(2 * K + 1, dtype=bool), np.ones((2, 2)) > 0) * a
    assert np.allclose(off, 0)


def test_assemble_cosine_tridiagonal():
    series = FourierMatrixSeries.from_modes({1: [[1.0]], -1: [[1.0]]}, 1)
    spec = OperatorSpec(n=2, m=1, coeffs={2: series})
    a = assemble_bloch_matrix(spec, 0.0, 1)
    want = np.array(
        [
            [-4 * PI**2, 1.0, 0.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, -4 * PI**2],
        ]
    )
    assert np.allclose(a, want)


def test_truncation_guard():
    series = FourierMatrixSeries.from_modes({2: [[1.0]]}, 1)
    spec = OperatorSpec(n=2, m=1, coeffs={2: series})
    with pytest.raises(TruncationTooSmall):
        assemble_bloch_matrix(spec, 0.0, 1)


# ---------------------------------------------------------------------------
# Eigensystem
# ---------------------------------------------------------------------------


def test_free_spectrum_alpha_one(free_op):
    sp = solve_bloch(free_op, 0.9, 10)
    pred = np.sort_complex(
        np.array([(1j * (2 * PI * k + 0.9)) ** 2 for k in range(-10, 11)])
    )
    assert np.max(np.abs(np.sort_complex(sp.lambdas) - pred)) < 1e-9
    assert np.max(np.abs(sp.alphas - 1.0)) < 1e-10
    assert not any(p.defective for p in sp.pairs)


def test_constant_contains_eq4_values(const_op):
    sys = validate_spec(const_op)
    sp = solve_bloch(const_op, PI, 6)
    for j in (1, 2):
        want = unperturbed_eigenvalue(sys, 2, 0, j, PI)
        assert min(abs(sp.lambdas - want)) <= 1e-10 * (1 + abs(want))


def test_exactness_on_constant_coefficient_all_modes(const_op):
    # block-diagonal matrix: every Galerkin eigenvalue equals the closed form
    sys = validate_spec(const_op)
    K, t = 8, 1.234
    sp = solve_bloch(const_op, t, K)
    preds = np.sort_complex(
        np.array(
            [
                unperturbed_eigenvalue(sys, 2, k, j, t)
                for k in range(-K, K + 1)
                for j in (1, 2)
            ]
        )
    )
    got = np.sort_complex(sp.lambdas)
    assert np.max(np.abs(got - preds) / (1 + np.abs(preds))) <= 1e-9


def test_biorthogonality_invariant(perturbed_op):
    for t in (0.4, 1.7, 3.9):
        sp = solve_bloch(perturbed_op, t, 10)
        c = np.stack([p.psi.ravel() for p in sp.pairs])
        x = np.stack([p.x_left.ravel() for p in sp.pairs])
        gram = np.conj(c) @ x.T  # (X_i, Psi_j) = sum X_i conj(psi_j)
        assert np.max(np.abs(np.diag(gram) - 1)) <= 1e-10
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) <= 1e-8


def test_dual_route_agreement(perturbed_op):
    sp = solve_bloch(perturbed_op, 1.0, 12)
    for pair in sp.pairs:
        if not pair.asymptotic or abs(pair.k) > 6:
            continue
        corr = newton_correction(perturbed_op, pair.lam, 1.0)
        assert corr <= 1e-6 * (1 + abs(pair.lam))


def test_fiber_periodicity_multiset(perturbed_op):
    a = np.sort_complex(solve_bloch(perturbed_op, 0.37, 12).lambdas)
    b = np.sort_complex(solve_bloch(perturbed_op, 0.37 + 2 * PI, 12).lambdas)
    # after k -> k+1 the truncation windows shift by one mode; compare the
    # bulk (drop the m extreme eigenvalues on each end)
    m = perturbed_op.m
    inner_a = a[2 * m : -2 * m]
    matched = [np.min(np.abs(b - lam)) / (1 + abs(lam)) for lam in inner_a]
    assert max(matched) <= 1e-9


def test_coefficient_decay(perturbed_op):
    # small-index eigenfunctions have |c_p| decaying at least like p^-2
    sp = solve_bloch(perturbed_op, 1.1, 16)
    small = [p for p in sp.pairs if not p.asymptotic][:4]
    assert small
    for pair in small:
        mags = np.linalg.norm(pair.psi, axis=1)
        K = sp.K
        ps = np.arange(4, K // 2 + 1)
        vals = np.array([mags[K + p] + mags[K - p] for p in ps])
        slope = np.polyfit(np.log(ps), np.log(np.maximum(vals, 1e-300)), 1)[0]
        assert slope <= -2 + 0.3


def test_canonical_order_deterministic(const_op):
    a = solve_bloch(const_op, 0.5, 6)
    b = solve_bloch(const_op, 0.5, 6)
    assert np.array_equal(a.lambdas, b.lambdas)
    lams = a.lambdas
    order = np.lexsort((lams.imag, lams.real))
    assert np.array_equal(order, np.arange(len(lams)))


# ---------------------------------------------------------------------------
# Band tracking
# ---------------------------------------------------------------------------


def test_track_free_identity(free_op):
    grid = np.linspace(0.1, 1.1, 11)
    table = track_bands(free_op, grid, 6)
    for link in table.links:
        assert np.array_equal(link, np.arange(len(link)))
    # each band follows its closed form (the one small-index band is k = 0)
    for b in range(table.n_bands):
        lams = table.band_lambdas(b)
        pair = table.pair(0, b)
        k = pair.k if pair.asymptotic else 0
        pred = np.array([(1j * (2 * PI * k + t)) ** 2 for t in grid])
        assert np.max(np.abs(lams - pred)) < 1e-8


def test_track_through_crossing(const_op):
    t_star = 1 / (8 * PI)
    grid = np.linspace(t_star - 0.02, t_star + 0.02, 9)
    table = track_bands(const_op, grid, 6)
    # the two crossing branches continue smoothly: second difference stays small
    for b in range(table.n_bands):
        lams = table.band_lambdas(b)
        dd = np.abs(np.diff(lams, 2))
        assert np.max(dd) < 1e-2


def test_table_periodicity(free_op):
    # lambda_k(2 pi + a) = lambda_{k+1}(a): a band labelled k on the shifted
    # grid matches the band labelled k+1 on the base grid
    a = 0.23
    t1 = track_bands(free_op, np.linspace(a, a + 0.2, 5), 6)
    t2 = track_bands(free_op, np.linspace(a + 2 * PI, a + 2 * PI + 0.2, 5), 6)
    checked = 0
    for b2 in range(t2.n_bands):
        p2 = t2.pair(0, b2)
        if not p2.asymptotic:
            continue
        for b1 in range(t1.n_bands):
            p1 = t1.pair(0, b1)
            if p1.asymptotic and p1.k == p2.k + 1 and p1.j == p2.j:
                lam1 = t1.band_lambdas(b1)[0]
                lam2 = t2.band_lambdas(b2)[0]
                assert abs(lam1 - lam2) <= 1e-9 * (1 + abs(lam1))
                checked += 1
    assert checked >= 8


# ---------------------------------------------------------------------------
# Residuals and census
# ---------------------------------------------------------------------------


def test_residuals_constant_exact(const_op):
    table = track_bands(const_op, np.linspace(0.3, 0.9, 5), 12)
    rep = asymptotic_residuals(table)
    assert np.max(rep.r_lambda) <= 1e-9
    assert np.max(rep.r_psi) <= 1e-9
    assert np.max(rep.r_x) <= 1e-8


def test_residuals_free_zero(free_op):
    table = track_bands(free_op, np.linspace(0.3, 0.9, 3), 12)
    rep = asymptotic_residuals(table)
    assert np.max(rep.r_lambda) <= 1e-9


def test_residual_slopes_perturbed(perturbed_op):
    table = track_bands(perturbed_op, np.linspace(0.4, 1.2, 5), 24)
    rep = asymptotic_residuals(table, k_range=range(4, 13))
    assert rep.slope_lambda <= -1 + 0.2
    assert rep.slope_psi <= -1 + 0.2


def test_census_free(free_op):
    rep = disk_census(free_op, 0.01, 24, 3)
    assert rep.family == "zero"
    assert all(c == 2 for c in rep.disk_counts.values())
    assert rep.bounded_count == rep.expected_bounded == 5
    assert not rep.escaped


def test_census_constant_and_perturbed(const_op, perturbed_op):
    # N0 from the direct comparison |mu_j| (2 pi k)^(n-2) < k^(n-1):
    # for n=2, max|mu|=1, the correction fits from k=2 on
    for op in (const_op, perturbed_op):
        rep = disk_census(op, 0.0, 24, 2)
        assert all(c == 4 for c in rep.disk_counts.values()), rep.disk_counts
        assert rep.bounded_count == rep.expected_bounded == (2 * 2 - 1) * 2
        assert not rep.escaped


def test_census_pi_family(const_op):
    rep = disk_census(const_op, PI + 0.01, 24, 2)
    assert rep.family == "pi"
    assert all(c == 4 for c in rep.disk_counts.values()), rep.disk_counts
    assert rep.bounded_count == rep.expected_bounded == 2 * 2 * 2
    assert not rep.escaped


def test_census_third_order():
    op = free_operator(n=3)
    rep = disk_census(op, 0.001, 24, 3)
    assert all(c == 2 for c in rep.disk_counts.values())
    assert not rep.escaped


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------


def test_band_table_roundtrip(tmp_path, const_op):
    grid = np.linspace(0.2, 0.5, 4)
    table = track_bands(const_op, grid, 5)
    jpath = tmp_path / "bands.json"
    band_table_to_json(table, jpath)
    back = band_table_from_json(jpath)
    assert np.allclose(back.grid, grid)
    assert back.K == 5
    for i in range(len(grid)):
        assert np.allclose(back.spectra[i].lambdas, table.spectra[i].lambdas)
    cpath = tmp_path / "bands.csv"
    band_table_to_csv(table, cpath)
    lines = cpath.read_text().splitlines()
    assert lines[0].startswith("# blochspec")
    assert lines[1].split(",")[0] == "node"
    assert len(lines) == 2 + len(grid) * table.n_bands


def test_concurrent_tracking_matches_serial(const_op):
    grid = np.linspace(0.2, 0.6, 6)
    serial = track_bands(const_op, grid, 5)
    threaded = track_bands(const_op, grid, 5, workers=4)
    for i in range(len(grid)):
        assert np.array_equal(serial.spectra[i].lambdas, threaded.spectra[i].lambdas)
    for a, b in zip(serial.links, threaded.links):
        assert np.array_equal(a, b)
