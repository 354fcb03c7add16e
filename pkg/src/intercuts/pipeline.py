"""End-to-end separation: LP relaxation, change of variables, estimators, cuts.

For every nonlinear constraint ``g(x) <= 0`` violated at the LP vertex the
constraint is rewritten over the nonbasic coordinates, its concave
underestimator at the origin defines the S-free set, and the cuts requested
by the options are generated, mapped back and checked on a feasibility mesh.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .cutgen import LAMBDA_MAX, RaySystem, intersection_cut
from .errors import IntercutsError, UnboundedMesh
from .estimators import estimate
from .lp import Instance, map_cut_to_original, solve_lp, substitute_nonbasic
from .monoidal import MonoidalConfig, monoidal_cut
from .strengthen import build_hhat, strengthened_cut
from .validate import validate_cut

VIOLATION_TOL = 1e-6

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_LP = 3
EXIT_NOT_VIOLATED = 4
EXIT_CUT_FAILED = 5


@dataclass
class PipelineOptions:
    bounds: bool = False
    monoidal: bool = False
    k: tuple | None = None  # original variable indices (0-based); None means every integer one
    sos1: bool = False
    tuy: bool = False
    directions: int | None = None
    grid: int | None = None
    resolution: float = 0.01
    clip: float | None = None
    threshold: float = VIOLATION_TOL
    lam_max: float = LAMBDA_MAX


@dataclass
class RunReport:
    instance: str
    exit_code: int = EXIT_OK
    message: str = ""
    x_hat: list = field(default_factory=list)
    objective: float | None = None
    basic: list = field(default_factory=list)
    nonbasic: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    options: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self, timing=True):
        d = {
            "instance": self.instance,
            "exit_code": self.exit_code,
            "message": self.message,
            "x_hat": self.x_hat,
            "objective": self.objective,
            "basic": self.basic,
            "nonbasic": self.nonbasic,
            "constraints": self.constraints,
            "cuts": self.cuts,
            "rejected": self.rejected,
            "failures": self.failures,
            "options": self.options,
        }
        if timing:
            d["timing"] = self.timing
        return d

    def to_json(self, timing=True):
        return json.dumps(_clean(self.to_dict(timing)), sort_keys=True, indent=2) + "\n"


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _options_dict(opt: PipelineOptions):
    d = dict(opt.__dict__)
    if d["k"] is not None:
        d["k"] = [i + 1 for i in d["k"]]
    return d


def _integral_nonbasic(inst, tab):
    """Positions j of nonbasic coordinates that are integral (integer variable, integral active bound)."""
    out = {}
    for j, k in enumerate(tab.nonbasic):
        bound = inst.box.upper[k] if tab.at_upper[j] else inst.box.lower[k]
        if k in inst.integer and math.isfinite(bound) and float(bound).is_integer():
            out[k] = j
    return out


def run_pipeline(inst: Instance, opt: PipelineOptions | None = None) -> RunReport:
    opt = opt or PipelineOptions()
    rep = RunReport(inst.name, options=_options_dict(opt))
    t0 = time.perf_counter()
    try:
        tab, obj = solve_lp(inst)
    except (IntercutsError, ValueError) as err:
        rep.exit_code, rep.message = EXIT_LP, f"{type(err).__name__}: {err}"
        return rep
    rep.timing["lp"] = time.perf_counter() - t0
    rep.x_hat = [float(v) for v in tab.x_hat]
    rep.objective = obj
    rep.basic = [k + 1 for k in tab.basic]
    rep.nonbasic = [k + 1 for k in tab.nonbasic]

    violated = []
    for i, g in enumerate(inst.nlcons):
        with np.errstate(all="ignore"):
            val = float(ex.evaluate(g, tab.x_hat))
        hit = not math.isnan(val) and val > opt.threshold
        rep.constraints.append({"index": i + 1, "value": val, "violated": hit})
        if hit:
            violated.append(i)
    if not violated:
        rep.exit_code, rep.message = EXIT_NOT_VIOLATED, "LP vertex satisfies every nonlinear constraint"
        return rep

    nb = len(tab.nonbasic)
    nb_box = tab.nonbasic_box(inst.box)
    rays = RaySystem.axis(np.zeros(nb))
    ints = _integral_nonbasic(inst, tab)

    for i in violated:
        ts = time.perf_counter()
        produced = []

        def attempt(method, fn):
            try:
                out = fn()
            except IntercutsError as err:
                rep.failures.append({"constraint": i + 1, "method": method,
                                     "error": type(err).__name__, "reason": str(err)})
                return []
            return out if isinstance(out, list) else [out]

        try:
            h = substitute_nonbasic(inst.nlcons[i], tab)
            h_ave = estimate(h, np.zeros(nb)).under
        except IntercutsError as err:
            rep.failures.append({"constraint": i + 1, "method": "estimate",
                                 "error": type(err).__name__, "reason": str(err)})
            continue

        produced += attempt("ic", lambda: intersection_cut(h_ave, rays, opt.lam_max, inst.name))
        if opt.bounds:
            for tuy in sorted({False, opt.tuy}):
                produced += attempt(
                    "ic+bounds",
                    lambda tuy=tuy: strengthened_cut(
                        build_hhat(h_ave, nb_box, opt.grid, base_point=np.zeros(nb), tuy=tuy),
                        rays, lam_max=opt.lam_max, instance_id=inst.name),
                )
        if opt.monoidal:
            wanted = sorted(ints) if opt.k is None else list(opt.k)
            bad = [k for k in wanted if k not in ints]
            for k in bad:
                rep.failures.append({"constraint": i + 1, "method": "ic+monoidal", "error": "InvalidConfig",
                                     "reason": f"x{k + 1} is not an integral nonbasic variable"})
            K = tuple(ints[k] for k in wanted if k in ints)
            if K:
                cfg = MonoidalConfig(K=K, sos1=opt.sos1, directions=opt.directions)
                produced += attempt("ic+monoidal", lambda: monoidal_cut(h_ave, nb_box, cfg))

        for cut in produced:
            cut.provenance.setdefault("instance", inst.name)
            orig = map_cut_to_original(cut, tab, inst)
            try:
                verdict = validate_cut(orig, inst, opt.resolution, tableau=tab, clip=opt.clip).to_json()
            except UnboundedMesh as err:
                verdict = {"valid": None, "notes": [f"unchecked: {err}"]}
            entry = {"constraint": i + 1, "method": cut.provenance.get("method"),
                     "nonbasic": cut.to_json(), "original": orig.to_json(), "verdict": verdict}
            (rep.rejected if verdict["valid"] is False else rep.cuts).append(entry)
        rep.timing[f"constraint{i + 1}"] = time.perf_counter() - ts

    rep.timing["total"] = time.perf_counter() - t0
    if not rep.cuts:
        rep.exit_code = EXIT_CUT_FAILED
        reasons = "; ".join(f"{f['method']}: {f['reason']}" for f in rep.failures) or "every cut failed validation"
        rep.message = f"no cut generated ({reasons})"
    else:
        rep.message = f"{len(rep.cuts)} cut(s) for {len(violated)} violated constraint(s)"
    return rep
