"""Batch command-line front end.

Subcommands: spectrum, bands, singularities, census, expand, verify.
Outputs are deterministic for a fixed configuration: floats are serialized
with shortest round-trip repr, JSON keys are sorted, and every artifact
carries a version header.  Exit codes: 0 success, 1 domain/configuration
errors, 2 numerical failures.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import MalformedSpec, NumericalError, SpecError
from .expansion import (
    approximation_check,
    bracket_integral,
    plan_expansion,
    reconstruct,
)
from .fixtures import constant_coefficient, free_operator, indicator_function
from .gelfand import (
    invert_transform,
    load_cell_function,
    parseval_residual,
)
from .monodromy import characteristic_determinant, newton_correction
from .operators import load_operator, unperturbed_eigenvalue, validate_spec
from .singularities import (
    classify_cluster,
    degeneracy_report_to_dict,
    find_degeneracies,
    probe_ess_at_infinity,
    refine_degeneracy,
)
from .solver import (
    BAND_COLUMNS,
    asymptotic_residuals,
    band_table_from_json,
    band_table_to_csv,
    band_table_to_json,
    disk_census,
    solve_bloch,
    track_bands,
)

H_LIMIT = 1.0 / (15.0 * np.pi)

DEFAULTS = {
    "t": 1.0,
    "t_min": 0.1,
    "t_max": float(np.pi) - 0.1,
    "t_nodes": 25,
    "K": 24,
    "h": 0.02,
    "epsilon": 0.002,
    "k_max": 8,
    "p": 2.0,
    "N0": 3,
    "gap_tol": 0.1,
    "max_iter": 60,
    "format": "structured",
    "out": ".",
}


def _parser():
    ap = argparse.ArgumentParser(
        prog="blochspec",
        description="Fiber spectra, spectral singularities and bracketed "
        "expansions of periodic non-self-adjoint ODE systems",
    )
    ap.add_argument("--version", action="version", version=f"blochspec {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("spectrum", "single-quasimomentum spectrum dump"),
        ("bands", "band table over a quasimomentum grid plus residual report"),
        ("singularities", "degeneracy reports and the alpha-growth probe"),
        ("census", "eigenvalue counts in the localization disks"),
        ("expand", "spectral reconstruction of a function plus bound check"),
        ("verify", "run the built-in fixture checks"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="JSON file with default parameter values")
        p.add_argument("--operator", help="operator description file")
        p.add_argument("--function", help="cell-function file (expand)")
        p.add_argument("--bands", help="previously exported band table (expand)")
        p.add_argument("--t", type=float, help="quasimomentum (spectrum/census)")
        p.add_argument("--t-min", dest="t_min", type=float)
        p.add_argument("--t-max", dest="t_max", type=float)
        p.add_argument("--t-nodes", dest="t_nodes", type=int)
        p.add_argument("--K", type=int, help="Fourier truncation")
        p.add_argument("--h", type=float, help="half-width of the 0/pi windows")
        p.add_argument("--epsilon", type=float, help="excision half-width")
        p.add_argument("--k-max", dest="k_max", type=int)
        p.add_argument("--p", type=float, help="reconstruction half-width")
        p.add_argument("--N0", type=int, help="first localization disk index")
        p.add_argument("--gap-tol", dest="gap_tol", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["tabular", "structured", "both"])
    return ap


def _load_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MalformedSpec(f"config {args.config}: {exc}") from exc
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise MalformedSpec(f"config keys not recognized: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("t_nodes", "K", "k_max", "N0", "max_iter"):
        if cfg[key] <= 0:
            raise MalformedSpec(f"{key} must be positive, got {cfg[key]}")
    for key in ("h", "epsilon", "p", "gap_tol"):
        if cfg[key] <= 0:
            raise MalformedSpec(f"{key} must be positive, got {cfg[key]}")
    if cfg["h"] >= H_LIMIT:
        raise MalformedSpec(
            f"h={cfg['h']} violates h < 1/(15 pi) = {H_LIMIT:.6f}"
        )
    return cfg


def _need_operator(args):
    if not args.operator:
        raise MalformedSpec("--operator is required for this command")
    return load_operator(args.operator)


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not serializable: {type(o)}")


def _write_json(payload, cfg, command, path):
    doc = {
        "generator": f"blochspec {__version__}",
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        **payload,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _write_csv(rows, header, command, path):
    lines = [f"# blochspec {__version__} {command}", ",".join(header)]
    for row in rows:
        lines.append(
            ",".join(repr(x) if isinstance(x, float) else str(x) for x in row)
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _formats(cfg):
    fmt = cfg["format"]
    return {"tabular": ("csv",), "structured": ("json",), "both": ("csv", "json")}[fmt]


def _spectrum_rows(spectrum):
    rows = []
    for pair in spectrum.pairs:
        rows.append(
            (
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
    return rows


def cmd_spectrum(args, cfg):
    spec = _need_operator(args)
    spectrum = solve_bloch(spec, cfg["t"], cfg["K"])
    header = ("k", "j", "asymptotic", "re_lambda", "im_lambda", "re_alpha", "im_alpha", "defective")
    out = os.path.join(cfg["out"], "spectrum")
    if "csv" in _formats(cfg):
        _write_csv(_spectrum_rows(spectrum), header, "spectrum", out + ".csv")
    if "json" in _formats(cfg):
        _write_json(
            {"t": cfg["t"], "columns": list(header), "records": _spectrum_rows(spectrum)},
            cfg,
            "spectrum",
            out + ".json",
        )
    return 0


def _grid(cfg):
    return np.linspace(cfg["t_min"], cfg["t_max"], cfg["t_nodes"])


def cmd_bands(args, cfg):
    spec = _need_operator(args)
    table = track_bands(spec, _grid(cfg), cfg["K"])
    out = os.path.join(cfg["out"], "bands")
    if "csv" in _formats(cfg):
        band_table_to_csv(table, out + ".csv")
    if "json" in _formats(cfg):
        band_table_to_json(table, out + ".json")
    rep = asymptotic_residuals(table)
    res_rows = [
        (int(k), float(rl), float(rp), float(rx))
        for k, rl, rp, rx in zip(rep.ks, rep.r_lambda, rep.r_psi, rep.r_x)
    ]
    res_payload = {
        "columns": ["abs_k", "r_lambda", "r_psi", "r_x"],
        "records": res_rows,
        "slopes": {
            "lambda": rep.slope_lambda,
            "psi": rep.slope_psi,
            "x": rep.slope_x,
        },
    }
    if "csv" in _formats(cfg):
        _write_csv(res_rows, ("abs_k", "r_lambda", "r_psi", "r_x"), "bands",
                   os.path.join(cfg["out"], "residuals.csv"))
    if "json" in _formats(cfg):
        _write_json(res_payload, cfg, "bands", os.path.join(cfg["out"], "residuals.json"))
    return 0


def cmd_singularities(args, cfg):
    spec = _need_operator(args)
    table = track_bands(spec, _grid(cfg), cfg["K"])
    cands = find_degeneracies(table, cfg["gap_tol"])
    reports = []
    seen = []
    for cand in cands:
        ref = refine_degeneracy(spec, cand, cfg["K"], max_iter=cfg["max_iter"])
        if any(
            abs(ref.t_j - s[0]) < 1e-7 and abs(ref.Lambda - s[1]) < 1e-5 for s in seen
        ):
            continue
        seen.append((ref.t_j, ref.Lambda))
        rep = classify_cluster(
            spec,
            ref.t_j,
            ref.Lambda,
            window=min(cfg["epsilon"], cfg["gap_tol"] / 4),
            K=cfg["K"],
            multiplicity=ref.multiplicity,
        )
        reports.append(rep)
    probe = probe_ess_at_infinity(table)
    payload = {
        "reports": [degeneracy_report_to_dict(r) for r in reports],
        "alpha_growth": {
            "values": {f"{k},{j}": v for (k, j), v in sorted(probe.values.items())},
            "flagged": probe.flagged,
        },
    }
    out = os.path.join(cfg["out"], "degeneracies")
    if "json" in _formats(cfg):
        _write_json(payload, cfg, "singularities", out + ".json")
    if "csv" in _formats(cfg):
        rows = [
            (r.t_j, r.Lambda.real, r.Lambda.imag, r.multiplicity, r.verdict)
            for r in reports
        ]
        _write_csv(
            rows,
            ("t_j", "re_Lambda", "im_Lambda", "multiplicity", "verdict"),
            "singularities",
            out + ".csv",
        )
    return 0


def cmd_census(args, cfg):
    spec = _need_operator(args)
    report = disk_census(spec, cfg["t"], cfg["K"], cfg["N0"])
    rows = [(k, c, report.expected_per_disk) for k, c in sorted(report.disk_counts.items())]
    payload = {
        "family": report.family,
        "t": report.t,
        "N0": report.N0,
        "disk_counts": {str(k): c for k, c in report.disk_counts.items()},
        "expected_per_disk": report.expected_per_disk,
        "bounded_count": report.bounded_count,
        "expected_bounded": report.expected_bounded,
        "escaped": [[l.real, l.imag, k] for l, k in report.escaped],
        "artifacts": [[l.real, l.imag, k] for l, k in report.artifacts],
        "ok": report.ok,
    }
    out = os.path.join(cfg["out"], "census")
    if "json" in _formats(cfg):
        _write_json(payload, cfg, "census", out + ".json")
    if "csv" in _formats(cfg):
        _write_csv(rows, ("k", "count", "expected"), "census", out + ".csv")
    return 0


def cmd_expand(args, cfg):
    spec = _need_operator(args)
    if not args.function:
        raise MalformedSpec("--function is required for expand")
    f = load_cell_function(args.function)
    if args.bands:
        table = band_table_from_json(args.bands)
    else:
        h = cfg["h"]
        table = track_bands(
            spec, np.linspace(-h, 2 * np.pi - h, cfg["t_nodes"]), cfg["K"]
        )
    # the degeneracy scan needs a denser grid than the exported table
    scan_nodes = max(cfg["t_nodes"], 129)
    scan_table = (
        table
        if len(table.grid) >= scan_nodes
        else track_bands(
            spec, np.linspace(-cfg["h"], 2 * np.pi - cfg["h"], scan_nodes), cfg["K"]
        )
    )
    cands = find_degeneracies(scan_table, cfg["gap_tol"])
    reports = []
    seen = []
    for cand in cands:
        pi = np.pi
        if not (
            cfg["h"] < cand.t_star < pi - cfg["h"]
            or pi + cfg["h"] < cand.t_star < 2 * pi - cfg["h"]
        ):
            continue  # inside the 0/pi windows; the paired brackets handle it
        try:
            ref = refine_degeneracy(spec, cand, cfg["K"], max_iter=cfg["max_iter"])
        except NumericalError:
            continue
        if any(
            abs(ref.t_j - s[0]) < 1e-7 and abs(ref.Lambda - s[1]) < 1e-5 for s in seen
        ):
            continue
        seen.append((ref.t_j, ref.Lambda))
        reports.append(
            classify_cluster(
                spec,
                ref.t_j,
                ref.Lambda,
                window=min(cfg["epsilon"], cfg["gap_tol"] / 4),
                K=cfg["K"],
                multiplicity=ref.multiplicity,
            )
        )
    plan = plan_expansion(reports, cfg["h"], cfg["epsilon"])
    result = reconstruct(f, plan, table, cfg["p"])
    bound = approximation_check(f, table, plan, cfg["p"])
    payload = {
        "plan": {
            "h": plan.h,
            "epsilon": plan.epsilon,
            "regular_intervals": [list(iv) for iv in plan.regular_intervals],
            "sq_windows": [
                {"t_j": w.t_j, "multiplicity": w.multiplicity, "verdict": w.verdict}
                for w in plan.sq_windows
            ],
        },
        "error_l2": result.error_l2,
        "rel_error": result.rel_error,
        "contribution_norms": {
            k: float(np.linalg.norm(v)) for k, v in sorted(result.contributions.items())
        },
        "omission_check": {
            "measured": bound.measured,
            "bound": bound.bound,
            "M": bound.M,
            "h": bound.h,
        },
        "truncation": result.truncation,
    }
    out = os.path.join(cfg["out"], "expansion")
    if "json" in _formats(cfg):
        _write_json(payload, cfg, "expand", out + ".json")
    rows = []
    for i, x in enumerate(result.x):
        row = [float(x)]
        for c in range(spec.m):
            row += [
                result.f_values[i, c].real,
                result.f_values[i, c].imag,
                result.f_hat[i, c].real,
                result.f_hat[i, c].imag,
            ]
        rows.append(tuple(row))
    header = ["x"]
    for c in range(spec.m):
        header += [f"re_f{c}", f"im_f{c}", f"re_fhat{c}", f"im_fhat{c}"]
    _write_csv(rows, header, "expand", os.path.join(cfg["out"], "samples.csv"))
    return 0


def _verify_checks(cfg):
    pi = np.pi
    checks = []

    free = free_operator()
    sp = solve_bloch(free, 1.0, 8)
    pred = np.sort_complex([(1j * (2 * pi * k + 1.0)) ** 2 for k in range(-8, 9)])
    err = float(np.max(np.abs(np.sort_complex(sp.lambdas) - pred)))
    checks.append(("free-spectrum-exact", err < 1e-9, f"max err {err:.2e}"))

    op = constant_coefficient((0.0, 1.0))
    sysm = validate_spec(op)
    sp2 = solve_bloch(op, pi, 8)
    want = [unperturbed_eigenvalue(sysm, 2, 0, j, pi) for j in (1, 2)]
    err2 = float(
        max(min(abs(l - w) for l in sp2.lambdas) for w in want)
    )
    checks.append(("constant-coefficient-exact", err2 < 1e-9, f"max err {err2:.2e}"))

    off = 0.0
    for i, pi_ in enumerate(sp2.pairs):
        for jj, pj in enumerate(sp2.pairs):
            if i != jj:
                off = max(off, abs(np.sum(np.conj(pj.psi) * pi_.x_left)))
    checks.append(("biorthogonality", off < 1e-8, f"max offdiag {off:.2e}"))

    d = characteristic_determinant(free, -((pi / 2) ** 2), pi / 2)
    checks.append(("free-determinant-root", abs(d) < 1e-9, f"|Delta| {abs(d):.2e}"))

    corr = newton_correction(op, want[0], pi)
    checks.append(
        ("oracle-agreement", corr < 1e-6 * (1 + abs(want[0])), f"|Delta/Delta'| {corr:.2e}")
    )

    f = indicator_function(m=1)
    pres = parseval_residual(f)
    inv = invert_transform(f)
    inv_err = float(np.max(np.abs(inv.modes - f.modes)))
    checks.append(("parseval", pres < 1e-12, f"residual {pres:.2e}"))
    checks.append(("inversion", inv_err < 1e-12, f"max err {inv_err:.2e}"))

    table = track_bands(op, np.linspace(0.02, 0.08, 13), 8)
    cands = find_degeneracies(table, 0.3)
    ok_loc, detail = False, "no candidate"
    for cand in cands:
        try:
            ref = refine_degeneracy(op, cand, 8)
        except NumericalError:
            continue
        if abs(ref.t_j - 1 / (8 * pi)) < 1e-8:
            ok_loc, detail = True, f"t_j err {ref.t_j - 1 / (8 * pi):.2e}"
            break
    checks.append(("degeneracy-location", ok_loc, detail))

    plan = plan_expansion([], 0.05, 0.01)
    tot = plan.total_length()
    checks.append(
        ("partition-identity", abs(tot - 2 * pi) < 1e-12, f"total {tot!r}")
    )

    f2 = indicator_function(m=2)
    x_grid = np.linspace(-0.95, 0.95, 41)
    g = bracket_integral(
        op, 8, f2, 1 / (8 * pi), -38.98000074785185, 2, 0.01, x_grid, per_term=True
    )
    diff = float(np.max(np.abs(g.value - sum(r.value for r in g.per_term.values()))))
    checks.append(("bracket-consistency", diff < 1e-7, f"grouped-vs-sum {diff:.2e}"))
    return checks


def cmd_verify(args, cfg):
    checks = _verify_checks(cfg)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    payload = {
        "checks": [
            {"name": name, "ok": ok, "detail": detail} for name, ok, detail in checks
        ],
        "all_ok": all(ok for _, ok, _ in checks),
    }
    _write_json(payload, cfg, "verify", os.path.join(cfg["out"], "verify.json"))
    return 0 if payload["all_ok"] else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "bands": cmd_bands,
    "singularities": cmd_singularities,
    "census": cmd_census,
    "expand": cmd_expand,
    "verify": cmd_verify,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        os.makedirs(cfg["out"], exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
