"""Command-line interface: ``intercuts <command> [options]``.

Single-expression commands (cut, strengthen, monoidal) work in the
coordinates t = x - at of the axis cone at the apex ``--at``; their reports
also carry the cut rewritten over x. Index lists (--int, --k) are 1-based.

Exit codes: 0 success, 1 invalid cut found by ``validate``, 2 parse or input
error, 3 LP infeasible or unbounded, 4 no violated constraint, 5 cut
generation failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import expr as ex
from .cutgen import Cut, RaySystem, intersection_cut
from .errors import IntercutsError, ParseError, UnboundedMesh
from .estimators import estimate
from .lp import Instance
from .monoidal import MonoidalConfig, monoidal_cut, sweep_boundary
from .pipeline import (EXIT_CUT_FAILED, EXIT_OK, EXIT_PARSE, PipelineOptions, RunReport, _clean,
                       run_pipeline)
from .plotdata import emit_plot_data, write_rows
from .strengthen import Box, build_hhat, strengthened_cut
from .validate import ray_space_instance, validate_cut

EXIT_INVALID = 1


class InputError(Exception):
    pass


def _floats(text, name):
    if text is None:
        return None
    try:
        return np.array([float(s) for s in text.replace(" ", "").split(",") if s], dtype=float)
    except ValueError as err:
        raise InputError(f"--{name}: {err}") from None


def _indices(text, name):
    if text is None:
        return None
    try:
        idx = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError as err:
        raise InputError(f"--{name}: {err}") from None
    if any(i < 1 for i in idx):
        raise InputError(f"--{name}: indices are 1-based")
    return [i - 1 for i in idx]


def _point_and_expr(args):
    at = _floats(args.at, "at")
    if at is None:
        raise InputError("--at is required")
    return at, ex.parse(args.expr, at.size)


def _box(args, n):
    lb = _floats(args.lb, "lb")
    ub = _floats(args.ub, "ub")
    lb = np.full(n, -np.inf) if lb is None else lb
    ub = np.full(n, np.inf) if ub is None else ub
    if lb.size != n or ub.size != n:
        raise InputError(f"--lb/--ub need {n} values")
    return Box(lb, ub)


def _dump(obj, path: Path | None):
    text = json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def _emit(report: dict, cuts, args):
    out = Path(args.out) if args.out else None
    if not args.timing:
        report.pop("timing", None)
    text = _dump(report, out / "report.json" if out else None)
    if out is not None and cuts is not None:
        _dump(cuts, out / "cuts.json")
    sys.stdout.write(text)


def _ray_cut_entry(cut: Cut, apex, inst, args):
    """Cut in cone coordinates, over x, and its verdict on the cone part of the box."""
    orig = Cut(cut.coeffs, float(cut.rhs + cut.coeffs @ apex), "original", dict(cut.provenance))
    as_t = Cut(cut.coeffs, cut.rhs, "original", {})  # t-space instance is checked directly
    try:
        verdict = validate_cut(as_t, inst, args.resolution, clip=args.clip).to_json()
    except UnboundedMesh as err:
        verdict = {"valid": None, "notes": [f"unchecked: {err}"]}
    return {"method": cut.provenance.get("method"), "cone": cut.to_json(), "original": orig.to_json(),
            "verdict": verdict}


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args):
    at, f = _point_and_expr(args)
    pair = estimate(f, at)
    report = {
        "expr": ex.to_text(f),
        "at": at,
        "value": pair.value_at_base,
        "under": ex.to_text(pair.under),
        "over": ex.to_text(pair.over),
    }
    _emit(report, None, args)
    if args.out and at.size == 1:
        lo = args.range[0] if args.range else -2.5
        hi = args.range[1] if args.range else 2.5
        emit_plot_data("estimate", args.out, f=f, at=at[0], lo=lo, hi=hi, samples=args.samples)
    return EXIT_OK


def _cone_setup(args):
    at, g = _point_and_expr(args)
    box = _box(args, at.size)
    ints = _indices(args.int, "int") or []
    inst = ray_space_instance(g, at, box.lower, box.upper, ints)
    h = inst.nlcons[0]
    h_ave = estimate(h, np.zeros(at.size)).under
    return at, g, box, inst, h, h_ave


def cmd_cut(args):
    t0 = time.perf_counter()
    at, g, box, inst, h, h_ave = _cone_setup(args)
    cut = intersection_cut(h_ave, RaySystem.axis(np.zeros(at.size)), instance_id="expr")
    entry = _ray_cut_entry(cut, at, inst, args)
    report = {"expr": ex.to_text(g), "at": at, "h_ave": ex.to_text(h_ave), "cuts": [entry],
              "timing": {"total": time.perf_counter() - t0}}
    _emit(report, [cut.to_json()], args)
    return EXIT_OK


def cmd_strengthen(args):
    t0 = time.perf_counter()
    at, g, box, inst, h, h_ave = _cone_setup(args)
    n = at.size
    rays = RaySystem.axis(np.zeros(n))
    cuts = [intersection_cut(h_ave, rays, instance_id="expr")]
    # hhat uses the whole box, the cut only needs to hold on the cone part of it
    full = Box(box.lower - at, box.upper - at)
    variants = [False, True] if args.tuy else [False]
    for tuy in variants:
        ev = build_hhat(h_ave, full, args.grid, base_point=np.zeros(n), tuy=tuy)
        cuts.append(strengthened_cut(ev, rays, instance_id="expr"))
    entries = [_ray_cut_entry(c, at, inst, args) for c in cuts]
    report = {"expr": ex.to_text(g), "at": at, "h_ave": ex.to_text(h_ave), "cuts": entries,
              "timing": {"total": time.perf_counter() - t0}}
    _emit(report, [c.to_json() for c in cuts], args)
    if args.out and n <= 2 and box.bounded:
        labels = ["ic", "ours"] + (["tuy"] if args.tuy else [])
        orig = [Cut(c.coeffs, c.rhs + c.coeffs @ at, "original", dict(c.provenance)) for c in cuts]
        emit_plot_data("region", args.out, h=g, at=at, box=box, grid=args.mesh, hhat_grid=args.grid,
                       cuts=orig, labels=labels)
    return EXIT_OK


def cmd_monoidal(args):
    t0 = time.perf_counter()
    at, g, box, inst, h, h_ave = _cone_setup(args)
    n = at.size
    ints = _indices(args.int, "int") or []
    if args.all_k:
        K = ints
    elif args.k is not None:
        K = _indices(args.k, "k")
    else:
        K = ints
    if not K:
        raise InputError("no integer index to strengthen; pass --k or --int")
    cfg = MonoidalConfig(K=tuple(K), sos1=args.sos1, directions=args.directions)
    sample = sweep_boundary(h_ave, inst.box, cfg)
    cuts = [intersection_cut(h_ave, RaySystem.axis(np.zeros(n)), instance_id="expr")]
    cuts += monoidal_cut(h_ave, inst.box, cfg, sample=sample)
    inst_int = ray_space_instance(g, at, box.lower, box.upper, set(K) | set(ints))
    entries = [_ray_cut_entry(c, at, inst_int, args) for c in cuts]
    report = {"expr": ex.to_text(g), "at": at, "h_ave": ex.to_text(h_ave), "K": [k + 1 for k in K],
              "boundary_points": len(sample), "cuts": entries,
              "timing": {"total": time.perf_counter() - t0}}
    _emit(report, [c.to_json() for c in cuts], args)
    if args.out:
        header = ([f"y{i + 1}" for i in range(n)] + [f"g{i + 1}" for i in range(n)]
                  + ["inner", "beta", "redundant", "usable"])
        write_rows(Path(args.out) / "y_samples.csv", header, sample.to_rows())
        if n == 2 and inst.box.bounded:
            emit_plot_data("cuts", args.out, cuts=cuts, window=inst.box,
                           labels=["ic"] + [f"monoidal{i + 1}" for i in range(len(cuts) - 1)])
    return EXIT_OK


def cmd_pipeline(args):
    inst = Instance.load(args.instance)
    k = _indices(args.k, "k") if (args.k is not None and not args.all_k) else None
    opt = PipelineOptions(bounds=args.bounds, monoidal=args.monoidal or args.k is not None or args.all_k,
                          k=None if k is None else tuple(k), sos1=args.sos1, tuy=args.tuy,
                          directions=args.directions, grid=args.grid, resolution=args.resolution,
                          clip=args.clip)
    rep: RunReport = run_pipeline(inst, opt)
    text = rep.to_json(timing=args.timing)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        _dump([c["original"] for c in rep.cuts], out / "cuts.json")
    sys.stdout.write(text)
    if rep.exit_code:
        print(rep.message, file=sys.stderr)
    return rep.exit_code


def _load_cuts(args, n):
    if args.cuts:
        data = json.loads(Path(args.cuts).read_text())
        data = data if isinstance(data, list) else [data]
        return [Cut.from_json(d) for d in data]
    coeffs = _floats(args.coeffs, "coeffs")
    if coeffs is None:
        raise InputError("pass --cuts FILE or --coeffs")
    if coeffs.size != n:
        raise InputError(f"--coeffs needs {n} values")
    return [Cut(coeffs, args.rhs, args.space, {"method": "user"})]


def cmd_validate(args):
    inst = Instance.load(args.instance)
    cuts = _load_cuts(args, inst.n)
    verdicts = [validate_cut(c, inst, args.resolution, clip=args.clip).to_json() for c in cuts]
    report = {"instance": inst.name, "cuts": [c.to_json() for c in cuts], "verdicts": verdicts,
              "valid": all(v["valid"] for v in verdicts)}
    _emit(report, None, args)
    return EXIT_OK if report["valid"] else EXIT_INVALID


def cmd_plot(args):
    if args.kind == "cuts":
        lb, ub = _floats(args.lb, "lb"), _floats(args.ub, "ub")
        if lb is None or ub is None:
            raise InputError("--lb and --ub give the window")
        data = json.loads(Path(args.cuts).read_text())
        cuts = [Cut.from_json(d) for d in (data if isinstance(data, list) else [data])]
        paths = emit_plot_data("cuts", args.out or ".", cuts=cuts, window=Box(lb, ub))
    elif args.kind == "estimate":
        at, f = _point_and_expr(args)
        lo, hi = args.range if args.range else (-2.5, 2.5)
        paths = emit_plot_data("estimate", args.out or ".", f=f, at=float(at[0]), lo=lo, hi=hi,
                               samples=args.samples)
    else:
        at, h = _point_and_expr(args)
        box = _box(args, at.size)
        window = None
        if args.window:
            w = _floats(args.window, "window")
            window = Box(w[0::2], w[1::2])
        paths = emit_plot_data("region", args.out or ".", h=h, at=at, box=box, window=window,
                               grid=args.mesh, hhat_grid=args.grid)
    for p in paths:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="intercuts", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, expr=True, box=True):
        if expr:
            sp.add_argument("--expr", required=True, help="expression over x1..xn")
            sp.add_argument("--at", help='base point / apex, e.g. "1,1"')
        if box:
            sp.add_argument("--lb", help="lower bounds, comma separated (inf allowed)")
            sp.add_argument("--ub", help="upper bounds, comma separated (inf allowed)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--no-timing", dest="timing", action="store_false", help="omit timings from reports")
        sp.add_argument("--resolution", type=float, default=0.01, help="validation mesh step")
        sp.add_argument("--clip", type=float, help="mesh half-width for unbounded coordinates")

    sp = sub.add_parser("estimate", help="concave under- and convex overestimator at a point")
    common(sp, box=False)
    sp.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), help="CSV range for n = 1")
    sp.add_argument("--samples", type=int, default=501)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("cut", help="intersection cut of {h_ave >= 0} at the apex")
    common(sp)
    sp.add_argument("--int", help="integer variables (1-based)")
    sp.set_defaults(func=cmd_cut)

    sp = sub.add_parser("strengthen", help="plain and bound-strengthened cuts")
    common(sp)
    sp.add_argument("--int", help="integer variables (1-based)")
    sp.add_argument("--tuy", action="store_true", help="also the variant without the h_ave(z) >= 0 restriction")
    sp.add_argument("--grid", type=int, help="sampling grid per axis for hhat")
    sp.add_argument("--mesh", type=int, default=201, help="points per axis of region.csv")
    sp.set_defaults(func=cmd_strengthen)

    sp = sub.add_parser("monoidal", help="monoidal strengthening for integer variables")
    common(sp)
    sp.add_argument("--int", help="integer variables (1-based)")
    sp.add_argument("--k", help="variable(s) to strengthen (1-based)")
    sp.add_argument("--all-k", action="store_true", help="strengthen every integer variable")
    sp.add_argument("--sos1", action="store_true", help="at most one integer variable is nonzero")
    sp.add_argument("--directions", type=int, help="sweep directions")
    sp.set_defaults(func=cmd_monoidal)

    sp = sub.add_parser("pipeline", help="separate an instance file end to end")
    sp.add_argument("--instance", required=True)
    common(sp, expr=False, box=False)
    sp.add_argument("--bounds", action="store_true", help="add bound-strengthened cuts")
    sp.add_argument("--monoidal", action="store_true", help="add monoidal cuts")
    sp.add_argument("--k", help="variable(s) for monoidal strengthening (1-based)")
    sp.add_argument("--all-k", action="store_true")
    sp.add_argument("--sos1", action="store_true")
    sp.add_argument("--tuy", action="store_true")
    sp.add_argument("--directions", type=int)
    sp.add_argument("--grid", type=int)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("validate", help="check cuts on a feasibility mesh of an instance")
    sp.add_argument("--instance", required=True)
    common(sp, expr=False, box=False)
    sp.add_argument("--cuts", help="cuts.json file")
    sp.add_argument("--coeffs", help="cut coefficients, comma separated")
    sp.add_argument("--rhs", type=float, default=1.0)
    sp.add_argument("--space", choices=["original", "nonbasic"], default="original")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("plot", help="write CSV data for estimator, region or cut pictures")
    sp.add_argument("kind", choices=["estimate", "region", "cuts"])
    sp.add_argument("--expr")
    sp.add_argument("--at")
    sp.add_argument("--lb")
    sp.add_argument("--ub")
    sp.add_argument("--window", help="region window lo1,hi1,lo2,hi2")
    sp.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--samples", type=int, default=501)
    sp.add_argument("--mesh", type=int, default=201)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--cuts")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot" and args.kind != "cuts" and not args.expr:
        print("error: --expr is required", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except (ParseError, InputError, json.JSONDecodeError, FileNotFoundError, KeyError, ValueError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_PARSE
    except IntercutsError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_CUT_FAILED


if __name__ == "__main__":
    sys.exit(main())
