"""Command-line surface: validate | analyze | reduce | symmetrize | evolve | report.

Exit codes: analyze encodes the verdict (0 strong, 2 weak, 3 not
hyperbolic, 4 inconclusive); validate returns 0 only on a clean system
(1 violations, 2 parse error); symmetrize returns 0 only when the full
construction chain verifies (5 candidate_only, 6 infeasible); evolve
returns 8 on an unstable run.  All floating output carries 17 significant
digits, and fixed seeds make repeated runs byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import reporting
from .directions import circle, default_sample, fibonacci_sphere, icosphere
from .evolution import (
    Constant,
    FourierModeRun,
    GridRun,
    GridSpec,
    PeriodizedGaussian,
    SineMode,
    band_limited_data,
    fourier_evolve,
    grid_evolve,
)
from .hyperbolicity import KAPPA_MAX, REALNESS_TOL, classify_strong
from .reduction import (
    IterativeReductionParams,
    choose_lambda,
    epsilon_choice,
    partial_choice,
    reduce_once,
)
from .symmetrizer import solve_J, solve_candidate
from .systemio import (
    SystemFormatError,
    dump_matrix,
    dump_reduction_params,
    dump_system,
    load_reduction_params,
    load_system,
)
from .systems import validate

DEFAULT_SEED = 1729
OUT_ENV = "FTNS_OUT_DIR"


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or "ftns-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stem(path, sys):
    return sys.label or Path(path).stem


def _load(path):
    try:
        return load_system(path), 0
    except FileNotFoundError:
        print(f"error: no such file: {path}", file=_sys.stderr)
        return None, 2
    except SystemFormatError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return None, 2


def _parse_sample(scheme, D, seed):
    if scheme is None or scheme == "default":
        return default_sample(D, dense=True, seed=seed)
    if scheme == "light":
        return default_sample(D, dense=False, seed=seed)
    kind, _, arg = scheme.partition(":")
    if kind == "icosphere":
        return icosphere(int(arg or 4))
    if kind == "fibonacci":
        return fibonacci_sphere(int(arg or 256))
    if kind == "circle":
        return circle(int(arg or 128))
    raise SystemExit(f"unknown sampling scheme {scheme!r}")


def _parse_direction(text, D):
    if text is None:
        s = np.zeros(D)
        s[0] = 1.0
        return s
    vals = np.array([float(t) for t in text.split(",")])
    if len(vals) != D:
        raise SystemExit(f"direction needs {D} components")
    return vals / np.linalg.norm(vals)


def cmd_validate(args):
    sysm, code = _load(args.system)
    if sysm is None:
        return code
    problems = validate(sysm)
    if problems:
        for p in problems:
            print(p)
        return 1
    print(f"ok: {sysm.label or args.system} (N={sysm.N}, D={sysm.spatial_dim}, "
          f"dims={list(sysm.dims)})")
    return 0


_VERDICT_CODE = {"strong": 0, "weak": 2, "not_hyperbolic": 3, "inconclusive": 4}


def cmd_analyze(args):
    sysm, code = _load(args.system)
    if sysm is None:
        return code
    problems = validate(sysm)
    if problems:
        for p in problems:
            print(p, file=_sys.stderr)
        return 2
    sample = _parse_sample(args.samples, sysm.spatial_dim, args.seed)
    report = classify_strong(sysm, sample, tol=args.tol, kappa_max=args.kappa_max)
    out = _out_dir(args)
    stem = _stem(args.system, sysm)
    (out / f"{stem}_analysis.csv").write_text(reporting.analysis_csv_text(report))
    (out / f"{stem}_analysis.txt").write_text(reporting.analysis_text(report))
    print(reporting.analysis_text(report), end="")
    if args.figures:
        for p in reporting.render_analysis_figures(report, str(out), stem):
            print(f"wrote {p}")
    print(f"wrote {out / (stem + '_analysis.csv')}")
    return _VERDICT_CODE[report.verdict]


def cmd_reduce(args):
    sysm, code = _load(args.system)
    if sysm is None:
        return code
    target = 1 if args.first_order else args.to_order
    if target is None:
        raise SystemExit("pick --to-order K or --first-order")
    if not (1 <= target < sysm.N):
        raise SystemExit(f"target order {target} not below N = {sysm.N}")
    out = _out_dir(args)
    stem = _stem(args.system, sysm)
    sample = _parse_sample(args.samples or "light", sysm.spatial_dim, args.seed)
    cur = sysm
    level = 0
    code = 0
    while cur.N > target:
        if args.strategy == "zero":
            red = reduce_once(cur, IterativeReductionParams.zero(cur))
            lam = None
        elif args.strategy == "file":
            if not args.params:
                raise SystemExit("--strategy file needs --params PATH")
            try:
                params = load_reduction_params(args.params, cur)
            except SystemFormatError as exc:
                print(f"error: {exc}", file=_sys.stderr)
                return 2
            red = reduce_once(cur, params)
            lam = None
        else:
            lam = args.lam if args.lam is not None else choose_lambda(cur, sample)
            params = partial_choice(cur)
            params.Dbar = epsilon_choice(lam, cur.dims[0], cur.spatial_dim)
            red = reduce_once(cur, params)
            red.lam = lam
        level += 1
        cur = red.sys
        fname = out / f"{stem}_N{cur.N}.json"
        dump_system(cur, fname)
        rep = classify_strong(cur, sample, tol=args.tol, kappa_max=args.kappa_max)
        line = f"level {level}: N={cur.N} dims={list(cur.dims)} verdict={rep.verdict}"
        if lam is not None:
            line += f" lambda={reporting.fmt(lam)}"
        print(line)
        print(f"wrote {fname}")
        pout = out / f"{stem}_N{cur.N}_params.json"
        dump_reduction_params(red.params, pout)
        (out / f"{stem}_N{cur.N}_analysis.txt").write_text(reporting.analysis_text(rep))
        code = max(code, _VERDICT_CODE[rep.verdict] if args.classify_exit else 0)
    return code


def cmd_symmetrize(args):
    sysm, code = _load(args.system)
    if sysm is None:
        return code
    out = _out_dir(args)
    stem = _stem(args.system, sysm)
    result = solve_candidate(sysm, rng=np.random.default_rng(args.seed))
    jres = None
    code = 0
    if result.status == "infeasible":
        code = 6
    elif result.status == "candidate_only":
        code = 5
    else:
        basis = sysm.basis()
        dump_matrix(result.candidate.H, out / f"{stem}_HN.csv", basis.labels())
        jres = solve_J(sysm, result.candidate, mode=args.mode)
        if jres.status != "ok":
            code = 7
        else:
            dump_matrix(jres.H1, out / f"{stem}_H1.csv")
            for p, db in enumerate(jres.dbar_ops):
                dump_matrix(db, out / f"{stem}_Dbar_p{p + 1}.csv")
            dump_system(jres.reduction.sys, out / f"{stem}_direct1.json")
            print(f"wrote {out / (stem + '_direct1.json')}")
    text = reporting.symmetrize_text(sysm, result, jres)
    (out / f"{stem}_symmetrize.txt").write_text(text)
    print(text, end="")
    return code


def cmd_evolve(args):
    sysm, code = _load(args.system)
    if sysm is None:
        return code
    out = _out_dir(args)
    stem = _stem(args.system, sysm)
    s = _parse_direction(args.direction, sysm.spatial_dim)
    if args.mode == "fourier":
        omegas = tuple(float(x) for x in args.omegas.split(","))
        table = fourier_evolve(FourierModeRun(sysm, s, omegas, args.t_final))
        (out / f"{stem}_growth.csv").write_text(reporting.growth_csv_text(table))
        print(f"slope of log growth vs |omega|: {reporting.fmt(table.slope())}")
        if args.figures:
            for p in reporting.render_growth_figure(table, str(out), stem):
                print(f"wrote {p}")
        print(f"wrote {out / (stem + '_growth.csv')}")
        return 0
    rng = np.random.default_rng(args.seed)
    data = _build_data(args.data, sysm, rng)
    grid = GridSpec(dim=args.grid_dim, points=args.points)
    run = GridRun(sysm, grid, data, t_final=args.t_final, cfl=args.cfl,
                  fd_order=args.fd_order)
    series = grid_evolve(run)
    (out / f"{stem}_series.csv").write_text(reporting.series_csv_text(series))
    if args.figures:
        for p in reporting.render_series_figures(series, str(out), stem):
            print(f"wrote {p}")
    print(f"status: {series.status}  steps: {series.steps}  "
          f"dt: {reporting.fmt(series.dt)}")
    print(f"wrote {out / (stem + '_series.csv')}")
    return 8 if series.status == "unstable" else 0


def _build_data(kind, sysm, rng):
    data = []
    for mu in range(sysm.N):
        block = []
        for a in range(sysm.dims[mu]):
            if kind == "sine":
                k = np.zeros(sysm.spatial_dim)
                k[0] = 1.0
                block.append(SineMode(k, amp=1.0 if mu == 0 else 0.0))
            elif kind == "gaussian":
                block.append(PeriodizedGaussian([np.pi], width=0.6)
                             if mu == 0 else Constant(0.0))
            else:
                block.append(band_limited_data(rng, D=1))
        data.append(block)
    return data


def cmd_report(args):
    """Analysis + symmetrizer + Fourier probe with figures, in one pass."""
    sysm, code = _load(args.system)
    if sysm is None:
        return code
    out = _out_dir(args)
    stem = _stem(args.system, sysm)
    sample = _parse_sample(args.samples or "default", sysm.spatial_dim, args.seed)
    report = classify_strong(sysm, sample, tol=args.tol, kappa_max=args.kappa_max)
    (out / f"{stem}_analysis.csv").write_text(reporting.analysis_csv_text(report))
    (out / f"{stem}_analysis.txt").write_text(reporting.analysis_text(report))
    reporting.render_analysis_figures(report, str(out), stem)
    s = _parse_direction(args.direction, sysm.spatial_dim)
    table = fourier_evolve(FourierModeRun(sysm, s, (1.0, 10.0, 100.0, 1000.0),
                                          t_final=0.01))
    (out / f"{stem}_growth.csv").write_text(reporting.growth_csv_text(table))
    reporting.render_growth_figure(table, str(out), stem)
    result = solve_candidate(sysm, rng=np.random.default_rng(args.seed))
    (out / f"{stem}_symmetrize.txt").write_text(
        reporting.symmetrize_text(sysm, result))
    print(f"verdict: {report.verdict}")
    print(f"symmetric hyperbolicity search: {result.status}")
    print(f"growth slope: {reporting.fmt(table.slope())}")
    print(f"reports under {out}")
    return _VERDICT_CODE[report.verdict]


def build_parser():
    ap = argparse.ArgumentParser(
        prog="ftns",
        description="hyperbolicity analysis and first-order reductions of "
                    "first-order-in-time, N-th-order-in-space systems")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, sampling=True):
        p.add_argument("system", help="system description file (JSON)")
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_ENV} or ftns-out)")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--tol", type=float, default=REALNESS_TOL,
                       help="eigenvalue realness tolerance")
        p.add_argument("--kappa-max", type=float, default=KAPPA_MAX)
        if sampling:
            p.add_argument("--samples", default=None,
                           help="default | light | icosphere:L | fibonacci:M | circle:M")

    p = sub.add_parser("validate", help="check the structural invariants")
    p.add_argument("system")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="strong-hyperbolicity classification")
    common(p)
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reduce", help="iterative order-lowering reductions")
    common(p)
    p.add_argument("--to-order", type=int, default=None)
    p.add_argument("--first-order", action="store_true")
    p.add_argument("--strategy", choices=["partial-epsilon", "zero", "file"],
                   default="partial-epsilon")
    p.add_argument("--params", default=None, help="parameter file for --strategy file")
    p.add_argument("--lam", type=float, default=None, help="override the level lambda")
    p.add_argument("--classify-exit", action="store_true",
                   help="exit with the worst verdict code over the levels")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("symmetrize", help="candidate symmetrizer search and "
                                          "direct first-order construction")
    common(p, sampling=False)
    p.add_argument("--mode", choices=["direct", "permutation"], default="direct")
    p.set_defaults(func=cmd_symmetrize)

    p = sub.add_parser("evolve", help="Fourier-mode or grid evolution")
    common(p, sampling=False)
    p.add_argument("--mode", choices=["fourier", "grid"], default="fourier")
    p.add_argument("--direction", default=None, help="comma-separated components")
    p.add_argument("--omegas", default="1,10,100,1000")
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--grid-dim", type=int, default=1)
    p.add_argument("--cfl", type=float, default=0.25)
    p.add_argument("--fd-order", type=int, default=4)
    p.add_argument("--data", choices=["sine", "gaussian", "random"], default="sine")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("report", help="full report with figures")
    common(p)
    p.add_argument("--direction", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
