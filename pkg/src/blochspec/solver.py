"""Fiber spectra by Fourier-Galerkin truncation, band tracking and censuses.

The fiber operator at quasimomentum t acts on the unit cell with
quasi-periodic boundary conditions.  In the basis e_s exp(i(2 pi p + t)x),
p = -K..K, its matrix is exact for band-limited coefficients: the diagonal
carries (i(2 pi p + t))^n and each Fourier mode q of P_nu couples column
mode p to row mode p + q with weight (i(2 pi p + t))^(n-nu).

For real t the basis is orthonormal, and the dual family
e_s exp(i(2 pi p + conj(t))x) makes it biorthogonal for complex t, so left
eigenvectors of the matrix are exactly the coefficient vectors of the
adjoint-fiber eigenfunctions in the dual basis.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from . import __version__
from .errors import AmbiguousMatching, EigensolveFailure, TruncationTooSmall
from .operators import (
    TWO_PI,
    operator_from_dict,
    operator_to_dict,
    quasiperiodic_norm_factor,
    unperturbed_eigenvalue,
    validate_spec,
)

BAND_COLUMNS = (
    "node",
    "t",
    "band",
    "k",
    "j",
    "asymptotic",
    "re_lambda",
    "im_lambda",
    "re_alpha",
    "im_alpha",
    "defective",
)


def assemble_bloch_matrix(spec, t, K):
    """Exact Galerkin matrix of the fiber operator, size m(2K+1)."""
    if K < spec.max_bandwidth:
        raise TruncationTooSmall(
            f"K={K} smaller than coefficient bandwidth {spec.max_bandwidth}"
        )
    n, m = spec.n, spec.m
    nmodes = 2 * K + 1
    z = 1j * (TWO_PI * np.arange(-K, K + 1) + t)
    a = np.zeros((nmodes, m, nmodes, m), dtype=np.complex128)
    idx = np.arange(nmodes)
    a[idx, :, idx, :] = np.einsum("p,ij->pij", z**n, np.eye(m))
    for nu, series in spec.coeffs.items():
        w = z ** (n - nu)
        for q in range(-series.bandwidth, series.bandwidth + 1):
            cq = series.mode(q)
            if not np.any(cq):
                continue
            ps = np.arange(max(-K, -K - q), min(K, K - q) + 1)
            a[ps + q + K, :, ps + K, :] += w[ps + K, None, None] * cq[None, :, :]
    return a.reshape(nmodes * m, nmodes * m)


@dataclass(frozen=True)
class BlochPair:
    """One eigenvalue of the truncated fiber operator with its biorthogonal pair.

    ``psi`` is the unit-norm right eigenfunction as a (2K+1, m) coefficient
    array over modes -K..K; ``x_left`` is the adjoint eigenfunction scaled so
    that (x_left, psi) = 1 (left unit-norm when ``defective``).  ``alpha`` is
    the pairing of the unit-norm left and right eigenfunctions.
    """

    lam: complex
    psi: np.ndarray
    x_left: np.ndarray
    alpha: complex
    defective: bool
    k: int
    j: int
    asymptotic: bool

    @property
    def label(self):
        return (self.k, self.j) if self.asymptotic else ("s", self.k, self.j)


@dataclass(frozen=True)
class BlochSpectrum:
    t: float
    K: int
    pairs: tuple

    @property
    def lambdas(self):
        return np.array([p.lam for p in self.pairs])

    @property
    def alphas(self):
        return np.array([p.alpha for p in self.pairs])

    def find(self, k, j):
        for p in self.pairs:
            if p.k == k and p.j == j:
                return p
        raise KeyError(f"no pair labelled (k={k}, j={j})")


def default_split_radius(sys, n):
    """Smallest |k| from which the mean-eigenvalue correction fits well inside
    the localization disk of radius k^(n-1)."""
    mumax = float(np.max(np.abs(sys.mu))) if sys.m else 0.0
    k = 1
    while mumax * (TWO_PI * k) ** (n - 2) > 0.5 * k ** (n - 1) and k < 10000:
        k += 1
    return k


def _assign_labels(lams, sys, n, t, K, split_radius):
    """Match eigenvalues to the closed-form predictions; returns (k, j, asym)."""
    m = sys.m
    ks = np.repeat(np.arange(-K, K + 1), m)
    js = np.tile(np.arange(1, m + 1), 2 * K + 1)
    z = 1j * (TWO_PI * ks + t)
    preds = z**n + sys.mu[js - 1] * z ** (n - 2)
    cost = np.abs(lams[:, None] - preds[None, :])
    nearest = np.argmin(cost, axis=1)
    if len(np.unique(nearest)) == len(nearest):
        chosen = nearest
    else:
        _, chosen = linear_sum_assignment(cost)
    k_out = ks[chosen]
    j_out = js[chosen]
    centers = (1j * (TWO_PI * k_out + t)) ** n
    radius = np.maximum(np.abs(k_out), 1) ** (n - 1)
    asym = (np.abs(k_out) >= split_radius) & (np.abs(lams - centers) < radius)
    return k_out, j_out, asym


def solve_bloch(spec, t, K, *, sys=None, defect_tol=1e-8, split_radius=None):
    """Full biorthogonal eigensystem of the truncated fiber operator at t."""
    if sys is None:
        sys = validate_spec(spec)
    if split_radius is None:
        split_radius = default_split_radius(sys, spec.n)
    a = assemble_bloch_matrix(spec, t, K)
    try:
        w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    except scipy.linalg.LinAlgError as exc:
        raise EigensolveFailure(f"eigendecomposition failed at t={t}: {exc}") from exc
    vr = vr / np.linalg.norm(vr, axis=0, keepdims=True)
    vl = vl / np.linalg.norm(vl, axis=0, keepdims=True)
    alpha = np.sum(np.conj(vr) * vl, axis=0)
    order = np.lexsort((w.imag, w.real))
    k_lab, j_lab, asym = _assign_labels(w, sys, spec.n, t, K, split_radius)

    nmodes = 2 * K + 1
    pairs = []
    small_rank = 0
    for i in order:
        defective = abs(alpha[i]) <= defect_tol
        psi = vr[:, i].reshape(nmodes, spec.m)
        if defective:
            xl = vl[:, i].reshape(nmodes, spec.m)
        else:
            xl = (vl[:, i] / alpha[i]).reshape(nmodes, spec.m)
        if asym[i]:
            k, j = int(k_lab[i]), int(j_lab[i])
        else:
            small_rank += 1
            k, j = small_rank, 0
        pairs.append(
            BlochPair(
                lam=complex(w[i]),
                psi=psi,
                x_left=xl,
                alpha=complex(alpha[i]),
                defective=bool(defective),
                k=k,
                j=j,
                asymptotic=bool(asym[i]),
            )
        )
    return BlochSpectrum(t=t, K=K, pairs=tuple(pairs))


@dataclass
class BandTable:
    """Per-node spectra over a quasimomentum grid with continuation links.

    ``links[i][a]`` is the pair index at node i+1 continuing pair a of node i;
    ``paths[i][b]`` is the pair index of band b at node i (bands are numbered
    by their position at the first node).
    """

    grid: np.ndarray
    spectra: list
    links: list
    operator: object
    sys: object
    K: int
    paths: np.ndarray = field(init=False)

    def __post_init__(self):
        nb = len(self.spectra[0].pairs)
        paths = np.empty((len(self.grid), nb), dtype=int)
        paths[0] = np.arange(nb)
        for i, link in enumerate(self.links):
            paths[i + 1] = link[paths[i]]
        self.paths = paths

    @property
    def n_bands(self):
        return self.paths.shape[1]

    def band_lambdas(self, b):
        return np.array(
            [self.spectra[i].pairs[self.paths[i, b]].lam for i in range(len(self.grid))]
        )

    def band_alphas(self, b):
        return np.array(
            [self.spectra[i].pairs[self.paths[i, b]].alpha for i in range(len(self.grid))]
        )

    def pair(self, node, b):
        return self.spectra[node].pairs[self.paths[node, b]]


def _match_nodes(pred, cur, match_margin, degeneracy_tol):
    cost = np.abs(pred[:, None] - cur[None, :])
    # nudge exact ties toward the canonical-order (identity) pairing
    n = len(pred)
    cost = cost + 1e-12 * np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    rows, cols = linear_sum_assignment(cost)
    link = np.empty(n, dtype=int)
    link[rows] = cols
    if match_margin > 0:
        matched = cost[rows, cols]
        # swap test: exchanging the partners of bands a and a' should cost
        # clearly more unless the bands are genuinely degenerate
        ca = cost[np.ix_(rows, cols)]
        swap = ca + ca.T - matched[:, None] - matched[None, :]
        sep_prev = np.abs(pred[rows][:, None] - pred[rows][None, :]) > degeneracy_tol
        sep_cur = np.abs(cur[cols][:, None] - cur[cols][None, :]) > degeneracy_tol
        bad = (swap < match_margin) & sep_prev & sep_cur
        np.fill_diagonal(bad, False)
        if np.any(bad):
            a, b = np.argwhere(bad)[0]
            raise AmbiguousMatching(
                f"bands at {pred[rows[a]]:.6g} and {pred[rows[b]]:.6g} are not "
                f"separably continued (swap margin {swap[a, b]:.3e}); refine the grid"
            )
    return link


def track_bands(
    spec,
    t_grid,
    K,
    *,
    sys=None,
    defect_tol=1e-8,
    split_radius=None,
    match_margin=0.0,
    degeneracy_tol=1e-9,
    workers=1,
):
    """Solve on an ordered grid and link spectra node-to-node by optimal
    bipartite matching on eigenvalue distance."""
    t_grid = np.asarray(t_grid, dtype=float)
    if sys is None:
        sys = validate_spec(spec)

    def solve_one(t):
        return solve_bloch(
            spec, t, K, sys=sys, defect_tol=defect_tol, split_radius=split_radius
        )

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            spectra = list(pool.map(solve_one, t_grid))
    else:
        spectra = [solve_one(t) for t in t_grid]

    # continuation by optimal assignment against velocity-extrapolated
    # positions: plain proximity is ambiguous for parallel bands whenever the
    # per-step motion exceeds their separation
    links = []
    prev = spectra[0].lambdas
    vel = np.zeros_like(prev)
    for i in range(len(t_grid) - 1):
        cur = spectra[i + 1].lambdas
        link = _match_nodes(prev + vel, cur, match_margin, degeneracy_tol)
        new_vel = np.empty_like(vel)
        new_vel[link] = cur[link] - prev
        links.append(link)
        prev, vel = cur, new_vel
    return BandTable(
        grid=t_grid, spectra=spectra, links=links, operator=spec, sys=sys, K=K
    )


# ---------------------------------------------------------------------------
# Asymptotic residuals
# ---------------------------------------------------------------------------


@dataclass
class ResidualReport:
    """Residuals against the closed-form eigentriples, per (|k|, node)."""

    ks: np.ndarray  # |k| values used for the slope fits
    r_lambda: np.ndarray  # max over nodes, signs and j, per |k|
    r_psi: np.ndarray
    r_x: np.ndarray
    slope_lambda: float
    slope_psi: float
    slope_x: float


def _phase_align(vec, reference):
    ph = np.vdot(reference, vec)
    if abs(ph) == 0:
        return vec
    return vec * np.conj(ph / abs(ph))


def asymptotic_residuals(table, sys=None, k_range=None):
    """Compare labelled pairs to the constant-coefficient formulas and fit
    log-log decay slopes of the residuals in |k|."""
    if sys is None:
        sys = table.sys
    spec = table.operator
    n, K = spec.n, table.K
    if k_range is None:
        k_range = range(max(2, 4), max(3, K // 2) + 1)
    ks = np.array(sorted(set(abs(k) for k in k_range if k != 0)))
    rl = np.full(len(ks), 1e-300)
    rp = np.full(len(ks), 1e-300)
    rx = np.full(len(ks), 1e-300)
    for spec_t in table.spectra:
        t = spec_t.t
        e_t = quasiperiodic_norm_factor(t)
        for pair in spec_t.pairs:
            if not pair.asymptotic or abs(pair.k) not in ks:
                continue
            i = int(np.searchsorted(ks, abs(pair.k)))
            pred = unperturbed_eigenvalue(sys, n, pair.k, pair.j, t)
            rl[i] = max(rl[i], abs(pair.lam - pred))
            profile = np.zeros_like(pair.psi)
            profile[pair.k + K] = e_t * sys.v[:, pair.j - 1]
            psi = _phase_align(pair.psi.ravel(), profile.ravel())
            rp[i] = max(rp[i], np.linalg.norm(psi - profile.ravel()))
            xprofile = np.zeros_like(pair.psi)
            xprofile[pair.k + K] = sys.u[:, pair.j - 1] / e_t
            ph = np.vdot(profile.ravel(), pair.psi.ravel())
            if abs(ph) > 0 and not pair.defective:
                xl = pair.x_left.ravel() * np.conj(ph / abs(ph))
                rx[i] = max(rx[i], np.linalg.norm(xl - xprofile.ravel()))
    logk = np.log(ks.astype(float))

    def fit(r):
        return float(np.polyfit(logk, np.log(np.maximum(r, 1e-300)), 1)[0])

    return ResidualReport(
        ks=ks,
        r_lambda=rl,
        r_psi=rp,
        r_x=rx,
        slope_lambda=fit(rl),
        slope_psi=fit(rp),
        slope_x=fit(rx),
    )


# ---------------------------------------------------------------------------
# Disk census near t = 0 and t = pi
# ---------------------------------------------------------------------------


@dataclass
class CensusReport:
    family: str  # "zero" or "pi"
    t: float
    N0: int
    disk_counts: dict  # k -> count (union of the +/- mirror disks)
    expected_per_disk: int
    bounded_count: int
    expected_bounded: int
    escaped: list  # (lambda, estimated |k|) outside every region
    artifacts: list  # escaped eigenvalues attributable to |k| > K/2

    @property
    def ok(self):
        return (
            all(c == self.expected_per_disk for c in self.disk_counts.values())
            and self.bounded_count == self.expected_bounded
            and not self.escaped
        )


def disk_census(spec, t, K, N0, *, sys=None, family=None):
    """Count Galerkin eigenvalues in the localization disks around
    (2 pi k i)^n (family "zero") or (i(2 pi k + pi))^n (family "pi").

    For odd n the mirror disk around the opposite-sign center is included in
    each count region, since the two branches +/-k only share a disk when n
    is even.  Eigenvalues outside every region whose estimated index exceeds
    K/2 are reported as truncation artifacts, not failures.
    """
    if sys is None:
        sys = validate_spec(spec)
    n, m = spec.n, spec.m
    tw = np.mod(t, TWO_PI)
    if family is None:
        family = "zero" if min(tw, TWO_PI - tw) <= abs(tw - np.pi) else "pi"
    spectrum = solve_bloch(spec, t, K, sys=sys)
    lams = spectrum.lambdas

    if family == "zero":
        def centers(k):
            return [(1j * TWO_PI * k) ** n, (-1j * TWO_PI * k) ** n]

        bounded_centers = [
            (1j * TWO_PI * kk) ** n for kk in range(-N0 + 1, N0)
        ]
        expected_bounded = (2 * N0 - 1) * m
        offset = 0.0
    else:
        def centers(k):
            c = (1j * (TWO_PI * k + np.pi)) ** n
            return [c, (-1) ** n * c]

        bounded_centers = []
        for kk in range(N0):
            c = (1j * (TWO_PI * kk + np.pi)) ** n
            bounded_centers.extend([c, (-1) ** n * c])
        expected_bounded = 2 * m * N0
        offset = np.pi

    kmax = K // 2
    assigned = np.zeros(len(lams), dtype=bool)
    disk_counts = {}
    for k in range(N0, kmax + 1):
        r = float(k) ** (n - 1)
        inside = np.zeros(len(lams), dtype=bool)
        for c in centers(k):
            inside |= np.abs(lams - c) < r
        disk_counts[k] = int(np.sum(inside))
        assigned |= inside
    r0 = float(N0) ** (n - 1)
    bounded = np.zeros(len(lams), dtype=bool)
    for c in bounded_centers:
        bounded |= np.abs(lams - c) < r0
    assigned |= bounded

    escaped, artifacts = [], []
    for lam in lams[~assigned]:
        k_est = int(round((abs(lam) ** (1.0 / n) - offset) / TWO_PI))
        if k_est > kmax:
            artifacts.append((complex(lam), k_est))
        else:
            escaped.append((complex(lam), k_est))
    return CensusReport(
        family=family,
        t=float(t),
        N0=N0,
        disk_counts=disk_counts,
        expected_per_disk=2 * m,
        bounded_count=int(np.sum(bounded)),
        expected_bounded=expected_bounded,
        escaped=escaped,
        artifacts=artifacts,
    )


# ---------------------------------------------------------------------------
# Band table export / import
# ---------------------------------------------------------------------------


def band_table_records(table):
    """Flat records in the documented column order (BAND_COLUMNS)."""
    records = []
    for i, t in enumerate(table.grid):
        for b in range(table.n_bands):
            pair = table.pair(i, b)
            records.append(
                (
                    i,
                    float(t),
                    b,
                    pair.k,
                    pair.j,
                    int(pair.asymptotic),
                    pair.lam.real,
                    pair.lam.imag,
                    pair.alpha.real,
                    pair.alpha.imag,
                    int(pair.defective),
                )
            )
    return records


def band_table_to_csv(table, path, command="bands"):
    lines = [f"# blochspec {__version__} {command}", ",".join(BAND_COLUMNS)]
    for rec in band_table_records(table):
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in rec))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def band_table_to_dict(table):
    return {
        "generator": f"blochspec {__version__}",
        "kind": "band-table",
        "operator": operator_to_dict(table.operator),
        "K": table.K,
        "grid": [float(t) for t in table.grid],
        "columns": list(BAND_COLUMNS),
        "records": [list(rec) for rec in band_table_records(table)],
    }


def band_table_to_json(table, path):
    with open(path, "w") as fh:
        json.dump(band_table_to_dict(table), fh, indent=1, sort_keys=True)
        fh.write("\n")


def band_table_from_json(path):
    """Rebuild a BandTable from an exported JSON document by re-solving at the
    stored grid (the export carries the operator and truncation, which fully
    determine the spectra)."""
    with open(path) as fh:
        data = json.load(fh)
    spec = operator_from_dict(data["operator"])
    return track_bands(spec, np.array(data["grid"], dtype=float), int(data["K"]))
