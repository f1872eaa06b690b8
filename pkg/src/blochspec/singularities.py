"""Location and classification of multiple fiber eigenvalues.

Near-collisions of tracked bands are bracketed on the grid, polished by a
damped two-dimensional Newton iteration on (Delta, dDelta/dlambda), and the
colliding cluster is classified by the local decay exponent gamma of the
biorthogonality pairing |alpha(t)| ~ c |t - t_j|^gamma: integrable reciprocal
(gamma < 1) marks a removable grouping, non-integrable (gamma > 1) an
essential singularity of the expansion.  The borderline stays indeterminate
and is grouped like the non-integrable case downstream, which is always safe.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from .errors import MultiplicityUnstable, NoConvergence, WindowContaminated
from .monodromy import det_jet
from .operators import validate_spec
from .solver import solve_bloch

VERDICT_ESS = "ESS"
VERDICT_NOT_ESS = "not-ESS"
VERDICT_INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class DegeneracyCandidate:
    t_star: float
    lambda_star: complex
    gap: float
    source_labels: tuple
    band_ids: tuple
    interval: int


def find_degeneracies(table, gap_tol):
    """Grid intervals on which two tracked eigenvalues approach within
    gap_tol, deduplicated per (interval run, eigenvalue cluster).

    Between nodes the branches are modelled linearly, so the minimum of
    |lambda_a(t) - lambda_b(t)| over a segment is available in closed form;
    fast crossings that dip well below gap_tol between two nodes are caught
    even on grids much coarser than the dip width.
    """
    grid = table.grid
    n_nodes = len(grid)
    nb = table.n_bands
    lam = np.empty((n_nodes, nb), dtype=np.complex128)
    for i in range(n_nodes):
        for b in range(nb):
            lam[i, b] = table.pair(i, b).lam

    raw = []
    for i in range(n_nodes - 1):
        u = lam[i][:, None] - lam[i][None, :]
        v = (lam[i + 1][:, None] - lam[i + 1][None, :]) - u
        vv = np.abs(v) ** 2
        s = np.where(vv > 0, -np.real(u * np.conj(v)) / np.where(vv > 0, vv, 1), 0.0)
        s = np.clip(s, 0.0, 1.0)
        dmin = np.abs(u + s * v)
        close = dmin < gap_tol
        np.fill_diagonal(close, False)
        if not np.any(close):
            continue
        ncomp, comp = connected_components(
            scipy.sparse.csr_matrix(close), directed=False
        )
        for c in range(ncomp):
            members = np.flatnonzero(comp == c)
            if len(members) < 2:
                continue
            sub = close[np.ix_(members, members)]
            s_sub = s[np.ix_(members, members)]
            d_sub = dmin[np.ix_(members, members)]
            gap = float(d_sub[sub].min())
            s_star = float(np.mean(s_sub[sub]))
            t_star = float(grid[i] + s_star * (grid[i + 1] - grid[i]))
            lam_star = complex(
                np.mean(lam[i, members] + s_star * (lam[i + 1, members] - lam[i, members]))
            )
            node = i if s_star <= 0.5 else i + 1
            raw.append(
                DegeneracyCandidate(
                    t_star=t_star,
                    lambda_star=lam_star,
                    gap=gap,
                    source_labels=tuple(
                        table.pair(node, b).label for b in members
                    ),
                    band_ids=tuple(int(b) for b in members),
                    interval=i,
                )
            )
    # merge candidates of the same band cluster on adjacent intervals
    raw.sort(key=lambda c: (c.band_ids, c.interval))
    merged = []
    for cand in raw:
        prev = merged[-1] if merged else None
        if (
            prev is not None
            and prev.band_ids == cand.band_ids
            and cand.interval <= prev.interval + 1
        ):
            if cand.gap < prev.gap:
                merged[-1] = cand
        else:
            merged.append(cand)
    merged.sort(key=lambda c: c.t_star)
    return merged


@dataclass(frozen=True)
class DegeneracyRefinement:
    t_j: float
    t_imag: float
    Lambda: complex
    multiplicity: int
    residual_delta: float
    residual_dlambda: float


def _cluster_break(dists, max_cluster=8):
    """Index c such that dists[:c] is the tight cluster (largest ratio jump)."""
    limit = min(max_cluster, len(dists) - 1)
    ratios = dists[1 : limit + 1] / np.maximum(dists[:limit], 1e-14)
    return int(np.argmax(ratios)) + 1


def refine_degeneracy(
    spec,
    cand,
    K=None,
    *,
    sys=None,
    tol=1e-11,
    max_iter=60,
    rtol=1e-12,
    atol=1e-14,
):
    """Polish a candidate to a joint root of Delta = 0 and dDelta/dlambda = 0
    by damped Newton, then estimate the multiplicity by counting Galerkin
    eigenvalues in the two shrinking disks around the multiple eigenvalue."""
    lam = complex(cand.lambda_star)
    t = complex(cand.t_star)
    jet = det_jet(spec, lam, t, rtol=rtol, atol=atol)
    weight = (abs(jet.d) + 1e-30) / (abs(jet.d_lam) + 1e-30)
    weight = min(max(weight, 1e-6), 1e6)

    def merit(j):
        return abs(j.d) + weight * abs(j.d_lam)

    m0 = merit(jet)
    converged = False
    for _ in range(max_iter):
        f = np.array([jet.d, jet.d_lam])
        jac = np.array([[jet.d_lam, jet.d_t], [jet.d_lam_lam, jet.d_lam_t]])
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Newton system at t={t}: {exc}") from exc
        # damping: accept the first fraction of the step that reduces the merit
        for damp in (1.0, 0.5, 0.25, 0.125, 0.0625):
            lam_new = lam + damp * step[0]
            t_new = t + damp * step[1]
            jet_new = det_jet(spec, lam_new, t_new, rtol=rtol, atol=atol)
            if merit(jet_new) < m0 or damp == 0.0625:
                break
        lam, t, jet = lam_new, t_new, jet_new
        m0 = merit(jet)
        if abs(t - cand.t_star) > 0.5:
            raise NoConvergence(
                f"refinement drifted from t={cand.t_star} to {t}"
            )
        if abs(step[0]) <= tol * (1 + abs(lam)) and abs(step[1]) <= tol:
            converged = True
            break
    if not converged:
        raise NoConvergence(
            f"no double-root convergence from (t={cand.t_star}, "
            f"lambda={cand.lambda_star}) in {max_iter} iterations"
        )

    scale_back = np.exp(min(jet.ref, 300.0))
    res_d = abs(jet.d) * scale_back
    res_dl = abs(jet.d_lam) * scale_back

    if K is None:
        K = max(12, 2 * spec.max_bandwidth)
    if sys is None:
        sys = validate_spec(spec)
    spectrum = solve_bloch(spec, float(np.real(t)), K, sys=sys)
    dists = np.sort(np.abs(spectrum.lambdas - lam))
    c = _cluster_break(dists)
    r = float(np.sqrt(max(dists[c - 1], 1e-14) * dists[c]))
    p_full = int(np.sum(np.abs(spectrum.lambdas - lam) < r))
    p_half = int(np.sum(np.abs(spectrum.lambdas - lam) < r / 2))
    if p_full != p_half:
        raise MultiplicityUnstable(
            f"cluster count changed from {p_full} (radius {r:.3e}) to "
            f"{p_half} (radius {r / 2:.3e}) at t={np.real(t):.8f}"
        )
    return DegeneracyRefinement(
        t_j=float(np.real(t)),
        t_imag=float(np.imag(t)),
        Lambda=complex(lam),
        multiplicity=p_full,
        residual_delta=res_d,
        residual_dlambda=res_dl,
    )


@dataclass
class DegeneracyReport:
    """Cluster classification at a singular quasimomentum.

    ``gamma`` maps each colliding label to the fitted exponent of
    |alpha(t)| ~ c |t - t_j|^gamma; labels split into integrable (B),
    non-integrable (S) and indeterminate.  The grouped set used by the
    expansion machinery is S + indeterminate.
    """

    t_j: float
    Lambda: complex
    multiplicity: int
    T: tuple
    B: tuple
    S: tuple
    indeterminate: tuple
    gamma: dict
    verdict: str
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def grouped_labels(self):
        return tuple(self.S) + tuple(self.indeterminate)


def _default_offsets(window, n_offsets):
    return window * 0.5 ** np.arange(1, n_offsets + 1)


def classify_cluster(
    spec,
    t_j,
    Lambda,
    window,
    K,
    *,
    multiplicity=None,
    offsets=None,
    n_offsets=8,
    gamma_margin=0.15,
    sys=None,
    defect_tol=1e-8,
    alpha_sampler=None,
    isolation_factor=2.0,
):
    """Fit the local exponent of |alpha| for every colliding branch.

    ``alpha_sampler(t) -> {label: alpha}`` overrides the spectral sampling
    (used to inject synthetic clusters); otherwise the ``multiplicity``
    branches nearest to Lambda are followed from the outermost offset inwards
    on both sides of t_j.
    """
    if offsets is None:
        offsets = _default_offsets(window, n_offsets)
    offsets = np.sort(np.asarray(offsets, dtype=float))[::-1]
    if sys is None and alpha_sampler is None:
        sys = validate_spec(spec)

    if alpha_sampler is not None:
        labels = None
        samples = {}
        for side in (+1, -1):
            for off in offsets:
                got = alpha_sampler(t_j + side * off)
                if labels is None:
                    labels = tuple(got.keys())
                for lab in labels:
                    samples.setdefault(lab, []).append((off, abs(got[lab])))
        t_labels = labels
    else:
        if multiplicity is None:
            raise ValueError("multiplicity is required unless alpha_sampler is given")
        p = multiplicity
        samples = {}
        t_labels = None
        branch_lam = None
        for side in (+1, -1):
            prev = None
            for oi, off in enumerate(offsets):
                t = t_j + side * off
                sp = solve_bloch(spec, t, K, sys=sys, defect_tol=defect_tol)
                dists = np.abs(sp.lambdas - Lambda)
                order = np.argsort(dists)
                cluster_idx = order[:p]
                if len(order) > p:
                    spread = dists[cluster_idx].max()
                    if dists[order[p]] < isolation_factor * max(spread, 1e-12):
                        raise WindowContaminated(
                            f"eigenvalue at distance {dists[order[p]]:.3e} from "
                            f"Lambda intrudes on the cluster (spread {spread:.3e}) "
                            f"at t={t:.8f}"
                        )
                lams = sp.lambdas[cluster_idx]
                alphas = np.abs(sp.alphas[cluster_idx])
                if prev is None:
                    if side > 0:
                        order2 = np.lexsort((lams.imag, lams.real))
                    else:
                        # continue branches through t_j by linear reflection
                        # from the + side: lambda_b(-d) ~ 2 Lambda - lambda_b(+d)
                        pred = 2 * Lambda - branch_lam
                        cost = np.abs(lams[:, None] - pred[None, :])
                        _, order2 = linear_sum_assignment(cost.T)
                else:
                    cost = np.abs(lams[:, None] - prev[None, :])
                    _, order2 = linear_sum_assignment(cost.T)
                lams = lams[order2]
                alphas = alphas[order2]
                prev = lams
                if side > 0 and oi == 0:
                    branch_lam = lams.copy()
                    sp_labels = [sp.pairs[i].label for i in cluster_idx[order2]]
                    t_labels = tuple(sp_labels)
                for b in range(p):
                    samples.setdefault(t_labels[b], []).append((off, alphas[b]))

    gamma = {}
    for lab, pts in samples.items():
        arr = np.array(pts)
        x = np.log(arr[:, 0])
        y = np.log(np.maximum(arr[:, 1], 1e-300))
        gamma[lab] = float(np.polyfit(x, y, 1)[0]) if len(arr) > 1 else 0.0

    b_set, s_set, ind_set = [], [], []
    for lab, g in gamma.items():
        if g < 1.0 - gamma_margin:
            b_set.append(lab)
        elif g > 1.0 + gamma_margin:
            s_set.append(lab)
        else:
            ind_set.append(lab)
    if s_set:
        verdict = VERDICT_ESS
    elif ind_set:
        verdict = VERDICT_INDETERMINATE
    else:
        verdict = VERDICT_NOT_ESS
    p = multiplicity if multiplicity is not None else len(gamma)
    return DegeneracyReport(
        t_j=float(t_j),
        Lambda=complex(Lambda),
        multiplicity=p,
        T=tuple(gamma.keys()),
        B=tuple(b_set),
        S=tuple(s_set),
        indeterminate=tuple(ind_set),
        gamma=gamma,
        verdict=verdict,
        samples=samples,
    )


@dataclass
class AlphaGrowthReport:
    """Trend of int 1/|alpha| per asymptotic band over the table window."""

    values: dict  # (k, j) -> integral value
    per_absk: dict  # |k| -> max over signs and j
    flagged: bool
    growth_factor: float


def probe_ess_at_infinity(table, *, growth_factor=10.0, defect_tol=1e-8):
    """Quadrature of 1/|alpha| per asymptotic band, with a growth flag when
    the top half of the available |k| range increases monotonically by at
    least ``growth_factor`` overall."""
    grid = table.grid
    values = {}
    for b in range(table.n_bands):
        labels = [table.pair(i, b).label for i in range(len(grid))]
        asym = [table.pair(i, b).asymptotic for i in range(len(grid))]
        if not all(asym):
            continue
        kj = max(set(labels), key=labels.count)
        alphas = np.abs(table.band_alphas(b))
        valid = alphas > defect_tol
        if np.sum(valid) < 2:
            continue
        integrand = np.where(valid, 1.0 / np.maximum(alphas, defect_tol), 0.0)
        val = float(np.trapezoid(integrand[valid], grid[valid]))
        key = (kj[0], kj[1])
        values[key] = max(values.get(key, 0.0), val)

    per_absk = {}
    for (k, j), v in values.items():
        per_absk[abs(k)] = max(per_absk.get(abs(k), 0.0), v)
    ks = sorted(per_absk)
    flagged = False
    if len(ks) >= 4:
        top = ks[len(ks) // 2 :]
        vals = [per_absk[k] for k in top]
        monotone = all(vals[i + 1] >= vals[i] for i in range(len(vals) - 1))
        flagged = monotone and vals[-1] >= growth_factor * max(vals[0], 1e-300)
    return AlphaGrowthReport(
        values=values,
        per_absk=per_absk,
        flagged=flagged,
        growth_factor=growth_factor,
    )


def degeneracy_report_to_dict(report):
    return {
        "t_j": report.t_j,
        "Lambda": [report.Lambda.real, report.Lambda.imag],
        "multiplicity": report.multiplicity,
        "labels": [list(map(str, lab if isinstance(lab, tuple) else (lab,))) for lab in report.T],
        "gamma": {str(lab): g for lab, g in report.gamma.items()},
        "B": [str(lab) for lab in report.B],
        "S": [str(lab) for lab in report.S],
        "indeterminate": [str(lab) for lab in report.indeterminate],
        "verdict": report.verdict,
    }
