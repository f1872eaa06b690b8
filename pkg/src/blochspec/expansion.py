"""Spectral expansion with brackets.

The fundamental window (-h, 2 pi - h] is partitioned into regular intervals,
excised neighborhoods of singular quasimomenta, and the two half-width-h
windows around 0 and pi.  On regular intervals every expansion term

    a_k(t) Psi_{k,t}(x),   a_k(t) = (f_t, X_{k,t})

is smooth and integrated with composite Gauss-Legendre panels.  Excised
neighborhoods are handled by a shrinking two-sided excision delta -> 0 with
Richardson extrapolation of the stage values; terms belonging to one
degenerate cluster are summed at each node before quadrature, so their
non-integrable parts cancel pointwise.  Near 0 and pi the brackets pair the
mode indices +k/-k (and k/-k-1 at pi).

All inner products are evaluated exactly in Fourier space: with f_t stored
as plain unit-cell modes and eigenfunctions in the t-shifted basis, the
cross-Gram entries are J(d) = int_0^1 exp(i(2 pi d - t)x) dx.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import roots_legendre

from .errors import (
    EpsilonTooLarge,
    NotCauchy,
    NumericalError,
    OverlappingWindows,
    ZeroFunction,
)
from .gelfand import gelfand_transform
from .operators import TWO_PI, unperturbed_eigenvalue, validate_spec
from .solver import default_split_radius, solve_bloch

_GL_X, _GL_W = roots_legendre(16)


def _gl_panel(a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * _GL_X, half * _GL_W


def _panel_nodes(a, b, max_width=0.1, n_panels=None):
    if n_panels is None:
        n_panels = max(1, math.ceil((b - a) / max_width))
    edges = np.linspace(a, b, n_panels + 1)
    xs, ws = [], []
    for i in range(n_panels):
        x, w = _gl_panel(edges[i], edges[i + 1])
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SqWindow:
    t_j: float
    epsilon: float
    Lambda: complex
    multiplicity: int
    grouped: bool  # cluster has non-integrable (or borderline) members
    verdict: str


@dataclass(frozen=True)
class ExpansionPlan:
    h: float
    epsilon: float
    window: tuple
    regular_intervals: tuple
    sq_windows: tuple
    zero_window: tuple
    pi_window: tuple
    interior_reports: tuple  # reports whose t_j fell inside the 0/pi windows

    def total_length(self):
        total = sum(b - a for a, b in self.regular_intervals)
        total += sum(2 * w.epsilon for w in self.sq_windows)
        total += self.zero_window[1] - self.zero_window[0]
        total += self.pi_window[1] - self.pi_window[0]
        return total


def plan_expansion(reports, h, epsilon, window=None):
    """Partition (-h, 2 pi - h] into regular intervals, singular-quasimomentum
    windows and the paired-bracket windows around 0 and pi.

    ``reports`` may be DegeneracyReport objects or anything with attributes
    t_j, Lambda and multiplicity (verdict and grouped labels are optional).
    """
    if window is None:
        window = (-h, TWO_PI - h)
    if h <= 0 or epsilon <= 0:
        raise EpsilonTooLarge("h and epsilon must be positive")
    pi = np.pi
    core, interior = [], []
    for rep in reports:
        t_j = float(rep.t_j)
        if (h < t_j < pi - h) or (pi + h < t_j < TWO_PI - h):
            core.append(rep)
        else:
            interior.append(rep)
    core.sort(key=lambda r: r.t_j)
    if core and epsilon * len(core) >= h:
        raise EpsilonTooLarge(
            f"epsilon={epsilon} with {len(core)} windows violates eps*count < h={h}"
        )
    for a, b in zip(core, core[1:]):
        if b.t_j - a.t_j < 2 * epsilon:
            raise OverlappingWindows(
                f"windows at t={a.t_j:.6f} and t={b.t_j:.6f} overlap for eps={epsilon}"
            )
    windows = []
    for rep in core:
        if not (
            h < rep.t_j - epsilon and rep.t_j + epsilon < TWO_PI - h
        ) or (rep.t_j - epsilon < pi + h and pi - h < rep.t_j + epsilon):
            raise OverlappingWindows(
                f"window at t={rep.t_j:.6f} leaks outside the regular region"
            )
        verdict = getattr(rep, "verdict", "indeterminate")
        grouped_labels = getattr(rep, "grouped_labels", None)
        grouped = bool(grouped_labels) if grouped_labels is not None else True
        windows.append(
            SqWindow(
                t_j=float(rep.t_j),
                epsilon=float(epsilon),
                Lambda=complex(rep.Lambda),
                multiplicity=int(rep.multiplicity),
                grouped=grouped,
                verdict=verdict,
            )
        )
    regular = []
    for lo, hi in ((h, pi - h), (pi + h, TWO_PI - h)):
        cur = lo
        for w in windows:
            if lo < w.t_j < hi:
                regular.append((cur, w.t_j - epsilon))
                cur = w.t_j + epsilon
        regular.append((cur, hi))
    return ExpansionPlan(
        h=float(h),
        epsilon=float(epsilon),
        window=(float(window[0]), float(window[1])),
        regular_intervals=tuple(regular),
        sq_windows=tuple(windows),
        zero_window=(-float(h), float(h)),
        pi_window=(pi - float(h), pi + float(h)),
        interior_reports=tuple(interior),
    )


# ---------------------------------------------------------------------------
# Per-node evaluation
# ---------------------------------------------------------------------------


def _pairing_matrix(t, K, m_band):
    """J(q - p) = int_0^1 exp(i(2 pi (q-p) - t)x) dx as a (2K+1, 2M+1) array."""
    p = np.arange(-K, K + 1)
    q = np.arange(-m_band, m_band + 1)
    z = 1j * (TWO_PI * (q[None, :] - p[:, None]) - t)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2 + z**2 / 6, (np.exp(-1j * t) - 1.0) / zs)


class _Node:
    """Spectral data of one quadrature node, with exact Fourier pairings."""

    def __init__(self, ev, t):
        self.ev = ev
        self.t = t
        self.spectrum = solve_bloch(
            ev.spec,
            t,
            ev.K,
            sys=ev.sys,
            defect_tol=ev.defect_tol,
            split_radius=ev.split_radius,
        )
        pairs = self.spectrum.pairs
        self.lams = np.array([p.lam for p in pairs])
        self.alphas = np.array([p.alpha for p in pairs])
        self.defective = np.array([p.defective for p in pairs])
        self.labels = [p.label for p in pairs]
        self.C = np.stack([p.psi for p in pairs])
        self.X = np.stack([p.x_left for p in pairs])
        self._E = None
        self._avec = {}

    def exp_basis(self):
        if self._E is None:
            K = self.ev.K
            freqs = TWO_PI * np.arange(-K, K + 1) + self.t
            self._E = np.exp(1j * np.multiply.outer(self.ev.x_grid, freqs))
        return self._E

    def a_vec(self, fi):
        """(f_t, X_k) for every pair; NaN on defective pairs."""
        if fi in self._avec:
            return self._avec[fi]
        fld = gelfand_transform(self.ev.fs[fi], self.t)
        jm = _pairing_matrix(self.t, self.ev.K, fld.bandwidth)
        w = jm @ fld.modes  # (2K+1, m)
        a = np.tensordot(self.X.conj(), w, axes=([1, 2], [0, 1]))
        a = np.where(self.defective, np.nan + 0j, a)
        self._avec[fi] = a
        return a

    def field(self, fi, rows=None):
        """sum over rows of a_k(t) Psi_k(x) on the x grid."""
        a = self.a_vec(fi)
        c = self.C
        if rows is not None:
            a = a[rows]
            c = c[rows]
        if np.any(np.isnan(a)):
            raise NumericalError(
                f"quadrature node t={self.t} touches a defective pair; "
                "the excision window is too small"
            )
        g = np.tensordot(a, c, axes=(0, 0))
        return self.exp_basis() @ g

    def fields_per_row(self, fi, rows):
        a = self.a_vec(fi)[rows]
        if np.any(np.isnan(a)):
            raise NumericalError(
                f"per-term evaluation at t={self.t} touches a defective pair"
            )
        e = self.exp_basis()
        return np.stack([e @ (a[i] * self.C[rows[i]]) for i in range(len(rows))])

    def cluster_rows(self, center, count):
        return np.argsort(np.abs(self.lams - center))[:count]

    def rows_for_labels(self, labels):
        """Rows carrying the given labels; a label missing at this node (the
        disk test is applied per node) falls back to the unclaimed eigenvalue
        nearest to its closed-form prediction."""
        idx = {lab: i for i, lab in enumerate(self.labels)}
        rows, missing = [], []
        for lab in labels:
            if lab in idx:
                rows.append(idx[lab])
            else:
                missing.append(lab)
        if missing:
            taken = set(rows)
            for lab in missing:
                if not (isinstance(lab, tuple) and len(lab) == 2):
                    raise NumericalError(f"cannot relocate label {lab} at t={self.t}")
                k, j = lab
                pred = unperturbed_eigenvalue(self.ev.sys, self.ev.spec.n, k, j, self.t)
                order = np.argsort(np.abs(self.lams - pred))
                row = next(int(r) for r in order if int(r) not in taken)
                taken.add(row)
                rows.append(row)
        return np.array(rows, dtype=int)


class _Evaluator:
    def __init__(
        self, spec, K, fs, x_grid, *, sys=None, defect_tol=1e-8, split_radius=None
    ):
        self.spec = spec
        self.K = K
        self.fs = list(fs)
        self.x_grid = np.asarray(x_grid, dtype=float)
        self.sys = sys if sys is not None else validate_spec(spec)
        self.defect_tol = defect_tol
        if split_radius is None:
            split_radius = default_split_radius(self.sys, spec.n)
        self.split_radius = split_radius

    def node(self, t):
        return _Node(self, t)


# ---------------------------------------------------------------------------
# Coefficients (public single-node operation)
# ---------------------------------------------------------------------------


def coefficients(f, spectrum):
    """Expansion coefficients a_k(t) = (f_t, X_k) at one node, keyed by label.

    Non-defective pairs map to the complex coefficient; defective pairs map
    to the raw tuple ((f_t, psi*_k), alpha_k) so callers can build bracketed
    combinations without dividing by a vanishing alpha.
    """
    fld = gelfand_transform(f, spectrum.t)
    jm = _pairing_matrix(spectrum.t, spectrum.K, fld.bandwidth)
    w = jm @ fld.modes
    out = {}
    for pair in spectrum.pairs:
        raw = complex(np.sum(np.conj(pair.x_left) * w))
        out[pair.label] = (raw, complex(pair.alpha)) if pair.defective else raw
    return out


# ---------------------------------------------------------------------------
# Delta-limit stage machinery
# ---------------------------------------------------------------------------


def _extrapolate(values, pv_tol, scale, context, raise_on_fail=True):
    """Richardson-style limit of a stage sequence with a Cauchy check."""
    diffs = [
        float(np.linalg.norm(values[i] - values[i - 1])) for i in range(1, len(values))
    ]
    v = values[-1]
    cauchy = True
    if len(diffs) >= 2 and diffs[-2] > 0:
        r = diffs[-1] / diffs[-2]
        if r < 0.9:
            v = values[-1] + (values[-1] - values[-2]) * (r / (1.0 - r))
            tail = diffs[-1] * r / (1.0 - r)
        else:
            tail = diffs[-1]
        growing = len(diffs) >= 3 and diffs[-1] >= diffs[-2] >= diffs[-3]
        if tail > pv_tol * scale and (growing or r >= 1.0):
            cauchy = False
    elif diffs and diffs[-1] > pv_tol * scale:
        cauchy = False
    if not cauchy and raise_on_fail:
        raise NotCauchy(
            f"{context}: stage differences {['%.3e' % d for d in diffs]} fail the "
            f"Cauchy criterion at pv_tol={pv_tol:g} (scale {scale:g})"
        )
    return v, diffs, cauchy


def _default_schedule(epsilon, stages=8):
    return epsilon * 0.5 ** np.arange(1, stages + 1)


def _sliver_nodes(t_j, epsilon, schedule):
    """Quadrature nodes of each excision stage: stage i adds the two slivers
    (delta_i, delta_{i-1}] on both sides of t_j."""
    edges = np.concatenate(([epsilon], schedule))
    stages = []
    for si in range(len(schedule)):
        hi, lo = edges[si], edges[si + 1]
        nodes = []
        for side in (+1, -1):
            a, b = sorted((t_j + side * lo, t_j + side * hi))
            xs, ws = _gl_panel(a, b)
            nodes.append((xs, ws))
        stages.append(nodes)
    return stages


# ---------------------------------------------------------------------------
# Cluster bracket at one singular quasimomentum
# ---------------------------------------------------------------------------


@dataclass
class BracketResult:
    value: np.ndarray  # (n_x, m) extrapolated limit
    stage_values: list
    stage_diffs: list
    cauchy: bool
    per_term: dict = field(default_factory=dict)


def _track_order(prev_lams, lams):
    cost = np.abs(lams[:, None] - prev_lams[None, :])
    _, order = linear_sum_assignment(cost.T)
    return order


def bracket_integral(
    spec,
    K,
    f,
    t_j,
    Lambda,
    multiplicity,
    epsilon,
    x_grid,
    *,
    delta_schedule=None,
    pv_tol=1e-6,
    per_term=False,
    term_provider=None,
    sys=None,
    raise_on_fail=True,
):
    """Excised integral of the cluster bracket over delta < |t - t_j| <= eps.

    Evaluates sum_{k in cluster} a_k(t) Psi_{k,t}(x) as a group at every
    quadrature node and extrapolates the stage sequence delta -> 0.  With
    ``per_term=True`` the individually tracked branch integrals and their own
    Cauchy flags are reported alongside (their sum equals the grouped value
    exactly when every branch is integrable).  ``term_provider(t) -> (p, nx, m)``
    replaces the spectral cluster with synthetic terms.
    """
    if delta_schedule is None:
        delta_schedule = _default_schedule(epsilon)
    delta_schedule = np.sort(np.asarray(delta_schedule, dtype=float))[::-1]
    x_grid = np.asarray(x_grid, dtype=float)
    p = int(multiplicity)

    if term_provider is None:
        ev = _Evaluator(spec, K, [f], x_grid, sys=sys)

        def terms_at(t):
            node = ev.node(t)
            rows = node.cluster_rows(Lambda, p)
            return node.fields_per_row(0, rows), node.lams[rows]

    else:

        def terms_at(t):
            per = np.asarray(term_provider(t))
            return per, np.arange(per.shape[0], dtype=complex)

    stage_group, stage_terms = [], []
    acc_group = acc_terms = None
    prev_lams = {+1: None, -1: None}
    anchor_plus = None
    for stage in _sliver_nodes(t_j, epsilon, delta_schedule):
        add_group = 0.0
        add_terms = 0.0
        for side, (xs, ws) in zip((+1, -1), stage):
            for t, w in zip(xs, ws):
                per, lams = terms_at(t)
                if acc_group is None:
                    shape = per.shape[1:]
                    acc_group = np.zeros(shape, dtype=np.complex128)
                    acc_terms = np.zeros((p,) + shape, dtype=np.complex128)
                if per_term and term_provider is None:
                    if prev_lams[side] is None:
                        if side > 0:
                            order = np.lexsort((lams.imag, lams.real))
                            anchor_plus = lams[order]
                        else:
                            order = _track_order(2 * Lambda - anchor_plus, lams)
                    else:
                        order = _track_order(prev_lams[side], lams)
                    per = per[order]
                    prev_lams[side] = lams[order]
                add_group = add_group + w * per.sum(axis=0)
                add_terms = add_terms + w * per
        acc_group = acc_group + add_group
        stage_group.append(acc_group.copy())
        if per_term:
            acc_terms = acc_terms + add_terms
            stage_terms.append(acc_terms.copy())
    scale = 1.0 + max(np.max(np.abs(v)) for v in stage_group)
    value, diffs, cauchy = _extrapolate(
        stage_group,
        pv_tol,
        scale,
        f"bracket at t_j={t_j:.8f}",
        raise_on_fail=raise_on_fail,
    )
    per_out = {}
    if per_term:
        for b in range(p):
            vals = [s[b] for s in stage_terms]
            vb, db, cb = _extrapolate(
                vals, pv_tol, scale, f"branch {b} at t_j={t_j:.8f}", raise_on_fail=False
            )
            per_out[b] = BracketResult(
                value=vb, stage_values=vals, stage_diffs=db, cauchy=cb
            )
    return BracketResult(
        value=value,
        stage_values=stage_group,
        stage_diffs=diffs,
        cauchy=cauchy,
        per_term=per_out,
    )


# ---------------------------------------------------------------------------
# Shared excised integration of whole windows
# ---------------------------------------------------------------------------


def _excision_layout(interval, centers, eps_w):
    """Excision widths (guarded against edges and neighbors) and the panel
    segments of the complement."""
    a, b = interval
    exc = sorted(t for t in centers if a < t < b)
    widths = []
    for i, t in enumerate(exc):
        w = min(eps_w, 0.9 * (t - a), 0.9 * (b - t))
        if i > 0:
            w = min(w, 0.45 * (t - exc[i - 1]))
        if i + 1 < len(exc):
            w = min(w, 0.45 * (exc[i + 1] - t))
        widths.append(w)
    segments = []
    cur = a
    for t, w in zip(exc, widths):
        segments.append((cur, t - w))
        cur = t + w
    segments.append((cur, b))
    return exc, widths, segments


def _integrate_excised(
    ev, group_rows, interval, centers, eps_w, *, delta_stages, pv_tol, max_width
):
    """Integrate every (group, function) pair over the interval with shared
    nodes: plain panels outside the excisions, delta-limit stages inside.

    ``group_rows`` maps group key -> rows_fn(node); returns
    {(gkey, fi): (n_x, m) array}.
    """
    n_f = len(ev.fs)
    exc, widths, segments = _excision_layout(interval, centers, eps_w)
    out = {}

    def shape_zero():
        return np.zeros((len(ev.x_grid), ev.spec.m), dtype=np.complex128)

    for gkey in group_rows:
        for fi in range(n_f):
            out[(gkey, fi)] = shape_zero()
    for lo, hi in segments:
        if hi - lo <= 1e-14:
            continue
        xs, ws = _panel_nodes(lo, hi, max_width=max_width)
        for t, w in zip(xs, ws):
            node = ev.node(t)
            for gkey, rows_fn in group_rows.items():
                rows = rows_fn(node)
                for fi in range(n_f):
                    out[(gkey, fi)] += w * node.field(fi, rows)
    for t_c, w_c in zip(exc, widths):
        schedule = _default_schedule(w_c, delta_stages)
        stages = {key: [] for key in out}
        acc = {key: shape_zero() for key in out}
        for stage in _sliver_nodes(t_c, w_c, schedule):
            for _, (xs, ws) in zip((+1, -1), stage):
                for t, w in zip(xs, ws):
                    node = ev.node(t)
                    for gkey, rows_fn in group_rows.items():
                        rows = rows_fn(node)
                        for fi in range(n_f):
                            acc[(gkey, fi)] += w * node.field(fi, rows)
            for key in out:
                stages[key].append(acc[key].copy())
        for key in out:
            scale = 1.0 + max(np.max(np.abs(v)) for v in stages[key])
            val, _, _ = _extrapolate(
                stages[key], pv_tol, scale, f"excision at t={t_c:.8f}"
            )
            out[key] += val
    return out


def _scan_alpha_dips(ev, interval, rows_fns, n_scan=65, alpha_dip=0.5):
    """One scan pass over the interval; per rows_fn, the local minima regions
    where the in-group |alpha| dips below the threshold."""
    a, b = interval
    ts = np.linspace(a, b, n_scan + 2)[1:-1]
    mins = {key: np.empty(len(ts)) for key in rows_fns}
    for i, t in enumerate(ts):
        node = ev.node(t)
        for key, rows_fn in rows_fns.items():
            rows = rows_fn(node)
            mins[key][i] = (
                np.min(np.abs(node.alphas[rows])) if len(rows) else np.inf
            )
    dips = {}
    for key, vals in mins.items():
        found = []
        low = vals < alpha_dip
        i = 0
        while i < len(ts):
            if low[i]:
                j = i
                while j + 1 < len(ts) and low[j + 1]:
                    j += 1
                found.append(float(ts[i + np.argmin(vals[i : j + 1])]))
                i = j + 1
            else:
                i += 1
        dips[key] = found
    return dips


# ---------------------------------------------------------------------------
# Paired windows around t = 0 and t = pi
# ---------------------------------------------------------------------------


def _pair_groups(center, split_radius, K, m):
    """Label groups {(+-k, j)} (zero) or {(k, j), (-k-1, j)} (pi)."""
    groups = {}
    if center == 0.0:
        for k in range(max(1, split_radius), K + 1):
            groups[k] = [(k, j) for j in range(1, m + 1)] + [
                (-k, j) for j in range(1, m + 1)
            ]
    else:
        for k in range(max(1, split_radius), K):
            groups[k] = [(k, j) for j in range(1, m + 1)] + [
                (-k - 1, j) for j in range(1, m + 1)
            ]
    return groups


def window_contributions(
    spec,
    K,
    fs,
    center,
    h,
    x_grid,
    *,
    sys=None,
    split_radius=None,
    delta_stages=8,
    pv_tol=1e-6,
    max_width=0.02,
    n_scan=65,
    alpha_dip=0.5,
):
    """Integral of the expansion over [center-h, center+h] through the
    paired-index brackets.

    Pair groups whose 2m labels are present throughout the window integrate
    as brackets; everything else forms the small-index pool (one safe
    superset bracket).  Alpha dips trigger local delta-limit excisions.
    Returns (totals per function, per-group breakdown of the first one).
    """
    ev = _Evaluator(spec, K, fs, x_grid, sys=sys, split_radius=split_radius)
    m = spec.m
    groups = _pair_groups(center, ev.split_radius, K, m)
    interval = (center - h, center + h)

    probes = [center + h * s for s in (-0.93, -0.41, 0.47, 0.95)]
    probe_nodes = [ev.node(t) for t in probes]
    active = {
        k: labels
        for k, labels in groups.items()
        if all(all(lab in node.labels for lab in labels) for node in probe_nodes)
    }
    active_labels = set(lab for labs in active.values() for lab in labs)

    rows_fns = {}
    for k, labels in active.items():
        rows_fns[k] = (lambda node, labels=labels: node.rows_for_labels(labels))
    rows_fns["small"] = lambda node: np.array(
        [i for i, lab in enumerate(node.labels) if lab not in active_labels],
        dtype=int,
    )

    dips = _scan_alpha_dips(ev, interval, rows_fns, n_scan=n_scan, alpha_dip=alpha_dip)
    centers = sorted(set(t for found in dips.values() for t in found))
    values = _integrate_excised(
        ev,
        rows_fns,
        interval,
        centers,
        h / 8,
        delta_stages=delta_stages,
        pv_tol=pv_tol,
        max_width=max_width,
    )
    totals = [np.zeros((len(x_grid), m), dtype=np.complex128) for _ in fs]
    breakdown = {}
    for (gkey, fi), val in values.items():
        totals[fi] += val
        if fi == 0:
            breakdown[gkey] = val
    return totals, breakdown


def paired_window_integral(window, f, table, k_range=None, *, x_grid=None, p=1.0, **kw):
    """Bracketed integral over the zero or pi window for one function.

    ``window`` is "zero" or "pi"; spectra and truncation come from the band
    table.  Returns (total, breakdown-by-pair-index).
    """
    center = 0.0 if window == "zero" else np.pi
    h = kw.pop("h", None)
    if h is None:
        grid = np.asarray(table.grid)
        h = float(np.max(np.abs(grid - center)))
    if x_grid is None:
        x_grid = _cell_midpoint_grid(p, 64)[0]
    totals, breakdown = window_contributions(
        table.operator, table.K, [f], center, h, x_grid, sys=table.sys, **kw
    )
    if k_range is not None:
        wanted = set(k_range)
        breakdown = {
            k: v for k, v in breakdown.items() if k == "small" or k in wanted
        }
    return totals[0], breakdown


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------


@dataclass
class ReconstructionResult:
    x: np.ndarray
    f_values: np.ndarray
    f_hat: np.ndarray
    contributions: dict
    error_l2: float
    rel_error: float
    truncation: dict


def _cell_midpoint_grid(p, samples_per_cell):
    cells = np.arange(-math.ceil(p), math.ceil(p))
    xs = [c + (np.arange(samples_per_cell) + 0.5) / samples_per_cell for c in cells]
    x = np.concatenate(xs)
    keep = (x > -p) & (x < p)
    return x[keep], 1.0 / samples_per_cell


def _grid_norm(values, dx):
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * dx))


def reconstruct_many(
    fs,
    plan,
    table,
    p,
    *,
    regular_nodes=200,
    samples_per_cell=None,
    delta_stages=8,
    pv_tol=1e-6,
    split_radius=None,
):
    """Reconstruct several functions through one sweep of shared eigensolves.

    Every plan component integrates the full truncated expansion; inside the
    excised windows the cluster cancellations happen in the pointwise sum, so
    the fused field equals the bracketed decomposition term for term.
    """
    spec, K = table.operator, table.K
    if samples_per_cell is None:
        samples_per_cell = max(64, 4 * K + 16)
    x_grid, dx = _cell_midpoint_grid(p, samples_per_cell)
    ev = _Evaluator(spec, K, fs, x_grid, sys=table.sys, split_radius=split_radius)

    contribs = [dict() for _ in fs]
    total_len = sum(b - a for a, b in plan.regular_intervals)
    acc = [np.zeros((len(x_grid), spec.m), dtype=np.complex128) for _ in fs]
    for a, b in plan.regular_intervals:
        if b - a <= 1e-14:
            continue
        n_panels = max(1, round((b - a) / total_len * regular_nodes / 16))
        xs, ws = _panel_nodes(a, b, n_panels=n_panels)
        for t, w in zip(xs, ws):
            node = ev.node(t)
            for fi in range(len(fs)):
                acc[fi] += w * node.field(fi)
    for fi in range(len(fs)):
        contribs[fi]["regular"] = acc[fi] / TWO_PI

    for wdw in plan.sq_windows:
        all_rows = {"all": lambda node: None}
        values = _integrate_excised(
            ev,
            all_rows,
            (wdw.t_j - wdw.epsilon, wdw.t_j + wdw.epsilon),
            [wdw.t_j],
            wdw.epsilon,
            delta_stages=delta_stages,
            pv_tol=pv_tol,
            max_width=0.02,
        )
        for fi in range(len(fs)):
            contribs[fi][f"sq@{wdw.t_j:.6f}"] = values[("all", fi)] / TWO_PI

    for name, center in (("window:zero", 0.0), ("window:pi", np.pi)):
        totals, _ = window_contributions(
            spec,
            K,
            fs,
            center,
            plan.h,
            x_grid,
            sys=table.sys,
            split_radius=split_radius,
            delta_stages=delta_stages,
            pv_tol=pv_tol,
        )
        for fi in range(len(fs)):
            contribs[fi][name] = totals[fi] / TWO_PI

    results = []
    for fi, f in enumerate(fs):
        f_vals = f.evaluate(x_grid)
        f_hat = np.zeros_like(f_vals)
        for v in contribs[fi].values():
            f_hat = f_hat + v
        err = _grid_norm(f_vals - f_hat, dx)
        nrm = _grid_norm(f_vals, dx)
        results.append(
            ReconstructionResult(
                x=x_grid,
                f_values=f_vals,
                f_hat=f_hat,
                contributions=contribs[fi],
                error_l2=err,
                rel_error=err / nrm if nrm > 0 else err,
                truncation={
                    "K": K,
                    "regular_nodes": regular_nodes,
                    "samples_per_cell": samples_per_cell,
                    "delta_stages": delta_stages,
                },
            )
        )
    return results


def reconstruct(f, plan, table, p, **kw):
    """Assemble f_hat = (1/2 pi) * [regular + singular windows + 0/pi windows]
    on a midpoint grid of (-p, p) and compare with f."""
    return reconstruct_many([f], plan, table, p, **kw)[0]


# ---------------------------------------------------------------------------
# Omission bound (regular-interval partial expansion)
# ---------------------------------------------------------------------------


@dataclass
class ApproximationCheck:
    measured: float
    bound: float
    M: float
    h: float
    rel_measured: float


def transform_sup_norm(f, n_t=128, n_x=256):
    """max over (x, t) of |f_t(x)| from the finite Gelfand sum."""
    xs = np.linspace(0, 1, n_x, endpoint=False)
    best = 0.0
    for t in np.linspace(0, TWO_PI, n_t, endpoint=False):
        vals = gelfand_transform(f, t).evaluate(xs)
        best = max(best, float(np.max(np.linalg.norm(vals, axis=-1))))
    return best


def approximation_check(f, table, plan, p, *, regular_nodes=200, samples_per_cell=None):
    """Error of dropping everything but the regular intervals, against the
    sup-norm bound 6 M h."""
    spec, K = table.operator, table.K
    if samples_per_cell is None:
        samples_per_cell = max(64, 4 * K + 16)
    x_grid, dx = _cell_midpoint_grid(p, samples_per_cell)
    ev = _Evaluator(spec, K, [f], x_grid, sys=table.sys)
    acc = np.zeros((len(x_grid), spec.m), dtype=np.complex128)
    total_len = sum(b - a for a, b in plan.regular_intervals)
    for a, b in plan.regular_intervals:
        if b - a <= 1e-14:
            continue
        n_panels = max(1, round((b - a) / total_len * regular_nodes / 16))
        xs, ws = _panel_nodes(a, b, n_panels=n_panels)
        for t, w in zip(xs, ws):
            acc += w * ev.node(t).field(0)
    partial = acc / TWO_PI
    f_vals = f.evaluate(x_grid)
    nrm = _grid_norm(f_vals, dx)
    if nrm == 0:
        raise ZeroFunction("approximation check needs a nonzero function")
    measured = _grid_norm(f_vals - partial, dx)
    m_sup = transform_sup_norm(f)
    return ApproximationCheck(
        measured=measured,
        bound=6.0 * m_sup * plan.h,
        M=m_sup,
        h=plan.h,
        rel_measured=measured / nrm,
    )


# ---------------------------------------------------------------------------
# Complex semicircle cross-check (optional mode)
# ---------------------------------------------------------------------------


def semicircle_cluster_integral(
    spec, K, f_plus, f_minus, t_j, epsilon, Lambda, multiplicity, x_grid, n_panels=4
):
    """Contour route for one cluster: the negative-support part over the upper
    semicircle plus the rest over the lower one, both running from t_j - eps
    to t_j + eps.  Equality with the real-line bracket is the analytic
    cross-check of the excision machinery for analytic-in-t clusters.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    theta, wt = _panel_nodes(0.0, np.pi, n_panels=n_panels)
    total = np.zeros((len(x_grid), spec.m), dtype=np.complex128)
    for sign, f_part in ((+1, f_plus), (-1, f_minus)):
        if f_part.n_cells == 0:
            continue
        ev = _Evaluator(spec, K, [f_part], x_grid)
        for th, w in zip(theta, wt):
            t = t_j + epsilon * np.exp(sign * 1j * th)
            node = ev.node(t)
            rows = node.cluster_rows(Lambda, multiplicity)
            # path runs theta: pi -> 0, so dt = -sign * i * eps * e^{sign i th} dth
            dt = -sign * 1j * epsilon * np.exp(sign * 1j * th) * w
            total += dt * node.field(0, rows)
    return total
