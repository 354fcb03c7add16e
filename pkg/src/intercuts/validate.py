"""Brute-force validity check of a cut against the feasible set of an instance.

The feasible set is sampled on a mesh: continuous coordinates at a fixed
resolution, integer coordinates at every integer value inside their bounds.
A cut is valid when every sampled feasible point satisfies it up to a small
tolerance. Instances with equality rows are meshed in nonbasic space and
lifted back through the tableau, since a mesh of the full box would almost
never hit the affine subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .cutgen import Cut
from .errors import UnboundedMesh
from .lp import Instance, Tableau, map_cut_to_original, solve_lp
from .strengthen import Box

CUT_TOL = 1e-7
FEAS_TOL = 1e-9
MAX_POINTS = 1_000_000


@dataclass
class Verdict:
    valid: bool
    margin: float  # smallest activity - rhs over sampled feasible points
    worst_point: list | None
    n_points: int
    n_feasible: int
    resolution: float
    tol: float = CUT_TOL
    notes: list = field(default_factory=list)

    def to_json(self):
        return {
            "valid": self.valid,
            "margin": None if not math.isfinite(self.margin) else float(self.margin),
            "worst_point": self.worst_point,
            "n_points": self.n_points,
            "n_feasible": self.n_feasible,
            "resolution": self.resolution,
            "tol": self.tol,
            "notes": list(self.notes),
        }


def _finite_bounds(lo, up, clip):
    if math.isfinite(lo) and math.isfinite(up):
        return lo, up
    if clip is None:
        raise UnboundedMesh("cannot mesh an unbounded coordinate; pass a clip width")
    if math.isfinite(lo):
        return lo, lo + clip
    if math.isfinite(up):
        return up - clip, up
    return -clip, clip


def _axis(lo, up, integer, resolution):
    if integer:
        return np.arange(math.ceil(lo - 1e-9), math.floor(up + 1e-9) + 1, dtype=float)
    k = max(1, int(round((up - lo) / resolution)))
    return np.linspace(lo, up, k + 1)


def _axes(lower, upper, integer, resolution, clip, notes):
    bounds = [_finite_bounds(lo, up, clip) for lo, up in zip(lower, upper)]
    res = resolution
    while True:
        axes = [_axis(lo, up, i in integer, res) for i, (lo, up) in enumerate(bounds)]
        size = math.prod(a.size for a in axes)
        if size <= MAX_POINTS or all(i in integer or a.size <= 2 for i, a in enumerate(axes)):
            break
        res *= 2.0
    if res != resolution:
        notes.append(f"mesh coarsened to resolution {res:g} ({size} points)")
    return axes, res


def _mesh(axes):
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1) if axes else np.zeros((1, 0))


def feasible_mesh(inst: Instance, resolution: float = 0.01, *, tableau: Tableau | None = None,
                  clip: float | None = None):
    """Sampled feasible points (original space), mesh size, resolution used and notes."""
    notes = []
    if inst.A.shape[0] == 0:
        axes, res = _axes(inst.box.lower, inst.box.upper, inst.integer, resolution, clip, notes)
        X = _mesh(axes)
    else:
        tab = tableau if tableau is not None else solve_lp(inst)[0]
        nb_box = tab.nonbasic_box(inst.box)
        # t_j is integral when x_j is integral and its active bound is integral
        ints = set()
        for j, k in enumerate(tab.nonbasic):
            bound = inst.box.upper[k] if tab.at_upper[j] else inst.box.lower[k]
            if k in inst.integer and float(bound).is_integer():
                ints.add(j)
        axes, res = _axes(nb_box.lower, nb_box.upper, ints, resolution, clip, notes)
        X = tab.lift(_mesh(axes))
        notes.append("meshed in nonbasic space")
    n_points = X.shape[0]
    keep = inst.box.contains(X, tol=FEAS_TOL)
    for i in sorted(inst.integer):
        keep &= np.abs(X[:, i] - np.round(X[:, i])) <= 1e-6
    for g in inst.nlcons:
        with np.errstate(all="ignore"):
            vals = ex.evaluate(g, X)
        keep &= vals <= FEAS_TOL
    return X[keep], n_points, res, notes


def validate_cut(cut: Cut, inst: Instance, resolution: float = 0.01, *, tableau: Tableau | None = None,
                 clip: float | None = None, tol: float = CUT_TOL) -> Verdict:
    """Check ``cut`` on every sampled feasible point of ``inst``.

    Cuts in nonbasic space are first rewritten over the original variables,
    which needs the tableau (solved from the instance when not given).
    """
    if cut.space != "original":
        tableau = tableau if tableau is not None else solve_lp(inst)[0]
        cut = map_cut_to_original(cut, tableau, inst)
    X, n_points, res, notes = feasible_mesh(inst, resolution, tableau=tableau, clip=clip)
    if X.shape[0] == 0:
        notes.append("no feasible mesh point")
        return Verdict(True, math.inf, None, n_points, 0, res, tol, notes)
    slack = cut.activity(X) - cut.rhs
    worst = int(np.argmin(slack))
    margin = float(slack[worst])
    valid = margin >= -tol * max(1.0, abs(float(cut.rhs)))
    return Verdict(valid, margin, [float(v) for v in X[worst]], n_points, X.shape[0], res, tol, notes)


def ray_space_instance(g: ex.Expr, apex, lower, upper, integer=(), name="expr") -> Instance:
    """Instance over t = x - apex restricted to the cone t >= 0 of the axis rays.

    Used by the single-expression commands, whose cuts live in these
    coordinates.
    """
    apex = np.asarray(apex, dtype=float)
    n = apex.size
    shift = {i: ex.linear_combination([(1.0, ex.Var(i)), (apex[i], ex.ONE)]) for i in range(n)}
    h = ex.substitute(g, shift)
    lo = np.maximum(0.0, np.asarray(lower, dtype=float) - apex)
    box = Box(lo, np.asarray(upper, dtype=float) - apex)
    return Instance(n, np.zeros(n), np.zeros((0, n)), np.zeros(0), box, frozenset(integer), (h,), (), name)

