"""Intersection cuts from the set {x : h(x) >= 0} of a concave function h.

Starting at the apex of a simplicial cone, each ray is followed until h
changes sign; the cut is ``sum_j x_j / lambda_j >= 1`` in the coordinates of
the cone (rays with no crossing contribute a zero coefficient).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import AllRaysUnbounded, ApexNotInterior

LAMBDA_MAX = 1e9
RESIDUAL_TOL = 1e-9
BISECTION_ITERS = 100


@dataclass(frozen=True)
class RaySystem:
    apex: np.ndarray
    rays: np.ndarray  # one ray per row

    def __post_init__(self):
        apex = np.asarray(self.apex, dtype=float).ravel()
        rays = np.atleast_2d(np.asarray(self.rays, dtype=float))
        if rays.shape[1] != apex.size:
            raise ValueError("rays and apex have different dimensions")
        if np.any(np.all(rays == 0, axis=1)):
            raise ValueError("zero ray")
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "rays", rays)

    @classmethod
    def axis(cls, apex):
        apex = np.asarray(apex, dtype=float).ravel()
        return cls(apex, np.eye(apex.size))

    def __len__(self):
        return self.rays.shape[0]


@dataclass
class Cut:
    """The inequality ``coeffs . x >= rhs``."""

    coeffs: np.ndarray
    rhs: float = 1.0
    space: str = "nonbasic"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    def activity(self, X):
        return np.asarray(X, dtype=float) @ self.coeffs

    def to_json(self):
        d = {
            "space": self.space,
            "coeffs": [float(c) for c in self.coeffs],
            "rhs": float(self.rhs),
            "method": self.provenance.get("method", "ic"),
        }
        extra = {k: v for k, v in self.provenance.items() if k != "method"}
        d.update(extra)
        d.setdefault("tolerances", {})
        return d

    @classmethod
    def from_json(cls, d):
        prov = {k: v for k, v in d.items() if k not in ("space", "coeffs", "rhs")}
        return cls(np.array(d["coeffs"], dtype=float), float(d.get("rhs", 1.0)), d.get("space", "nonbasic"), prov)


def ray_step(fun: Callable[[np.ndarray], float], apex, ray, lam_max: float = LAMBDA_MAX,
             tol: float = RESIDUAL_TOL, iters: int = BISECTION_ITERS) -> float:
    """Largest step along ``ray`` keeping ``fun >= 0``, or ``inf``.

    ``fun`` must be concave along the ray and positive at the apex, so there
    is at most one sign change. Brackets by doubling from 1, then bisects.
    The returned step never lies on the negative side.
    """
    apex = np.asarray(apex, dtype=float)
    ray = np.asarray(ray, dtype=float)
    f0 = fun(apex)
    if not f0 > 0:
        raise ApexNotInterior(f"function value {f0} at the apex is not positive")
    scale = tol * max(1.0, abs(f0))

    lo, hi = 0.0, 1.0
    while True:
        if hi > lam_max:
            return math.inf
        if fun(apex + hi * ray) < 0:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = fun(apex + mid * ray)
        if val >= 0:
            lo = mid
            if val <= scale:
                break
        else:
            hi = mid
    return lo


def step_length(h_ave: ex.Expr, ray, lam_max: float = LAMBDA_MAX, apex=None) -> float:
    """Boundary step of {h_ave >= 0} from ``apex`` (default origin) along ``ray``."""
    ray = np.asarray(ray, dtype=float).ravel()
    apex = np.zeros_like(ray) if apex is None else np.asarray(apex, dtype=float)
    return ray_step(lambda p: ex.evaluate(h_ave, p), apex, ray, lam_max)


def cut_from_steps(steps: Sequence[float], method: str, space: str = "nonbasic", **prov) -> Cut:
    steps = np.asarray(steps, dtype=float)
    if np.all(np.isinf(steps)):
        raise AllRaysUnbounded("every ray stays inside the S-free set; no cut")
    with np.errstate(divide="ignore"):
        coeffs = np.where(np.isinf(steps), 0.0, 1.0 / steps)
    provenance = {"method": method, "steps": [float(s) for s in steps]}
    provenance.update(prov)
    return Cut(coeffs, 1.0, space, provenance)


def intersection_cut(h_ave: ex.Expr, rays: RaySystem, lam_max: float = LAMBDA_MAX, instance_id=None) -> Cut:
    """Intersection cut of {h_ave >= 0} for the cone ``rays``."""
    steps = [step_length(h_ave, r, lam_max, apex=rays.apex) for r in rays.rays]
    return cut_from_steps(
        steps, "ic", instance=instance_id,
        tolerances={"residual": RESIDUAL_TOL, "lambda_max": lam_max, "bisection_iters": BISECTION_ITERS},
    )
