"""Bound-based enlargement of the S-free set {h_ave >= 0}.

Inside a box the concave underestimator can be replaced by

    hhat(x) = min { h_ave(z) + grad h_ave(z).(x - z) : z in box, h_ave(z) >= 0 }

which is concave (a min of affine functions), dominates h_ave and is still
nonpositive on every feasible point of the box. The inner minimisation is
not convex, so hhat is evaluated over a finite sample of z: a grid of the
box, boundary points of {h_ave >= 0} on segments from the base point, and
points polished by a local search at probe points. Sampling can only make
hhat larger than its true value, which is why cut steps are shrunk by a
relative safety factor.

Dropping the restriction ``h_ave(z) >= 0`` gives Tuy's older construction,
available through ``tuy=True``.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as ex
from .cutgen import Cut, RaySystem, cut_from_steps, ray_step
from .errors import ApexNotInterior, EmptyZRegion, UnsupportedDimension

log = logging.getLogger(__name__)

FALLBACK_HALF_WIDTH = 100.0
SUPERGRADIENT_TOL = 1e-7
N_PROBES = 200
MAX_DIM = 4


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        up = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != up.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lo > up):
            raise ValueError("lower bound above upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def unbounded(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def dim(self):
        return self.lower.size

    @property
    def bounded(self):
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=-1)

    def clip(self, X):
        return np.clip(X, self.lower, self.upper)


@dataclass(frozen=True)
class HhatEvaluator:
    h_ave: ex.Expr
    box: Box  # the (finite) sampling window
    base_point: np.ndarray
    points: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    tuy: bool = False
    rejected: int = 0
    warnings: tuple = ()
    settings: dict = field(default_factory=dict)

    @property
    def intercepts(self):
        return self.values - np.einsum("ij,ij->i", self.grads, self.points)

    def __call__(self, X):
        return hhat_eval(self, X)

    def __len__(self):
        return self.points.shape[0]

    def refined(self, probes, iters=20):
        """A new evaluator with samples polished at each probe point."""
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        new = [_local_search(self, x, iters) for x in probes]
        new = [z for z in new if z is not None]
        if not new:
            return self
        Z = np.vstack(new)
        return self._with_samples(Z)

    def _with_samples(self, Z):
        vals, G, keep = _admit_mask(self.h_ave, Z, self.box, self.tuy, self.settings.get("seed", 0))
        rejected = self.rejected + int((~keep).sum())
        if not keep.any():
            return replace(self, rejected=rejected)
        return replace(
            self,
            points=np.vstack([self.points, Z[keep]]),
            values=np.concatenate([self.values, vals[keep]]),
            grads=np.vstack([self.grads, G[keep]]),
            rejected=rejected,
        )


def _sampling_window(box: Box, base):
    lo, up = box.lower.copy(), box.upper.copy()
    notes = []
    for i in range(box.dim):
        if not math.isfinite(lo[i]) or not math.isfinite(up[i]):
            if not math.isfinite(lo[i]):
                lo[i] = base[i] - FALLBACK_HALF_WIDTH
            if not math.isfinite(up[i]):
                up[i] = base[i] + FALLBACK_HALF_WIDTH
            notes.append(f"x{i + 1} unbounded; sampling [{lo[i]:g}, {up[i]:g}]")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return Box(lo, up), tuple(notes)


def _segment_boundary(h, base, targets, iters=60):
    """Points on [base, t] with h >= 0 closest to the first sign change."""
    lo = np.zeros(len(targets))
    hi = np.ones(len(targets))
    d = targets - base
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        vals = ex.evaluate(h, base + mid[:, None] * d)
        ok = vals >= 0
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return base + lo[:, None] * d


def _admit_mask(h, Z, window, tuy, seed):
    """Values, gradients and admission mask for candidate samples Z."""
    vals = ex.evaluate(h, Z)
    keep = np.isfinite(vals)
    if not tuy:
        keep &= vals >= -1e-9
    G, ok = ex.grad_fd_batch(h, Z)
    keep &= ok & np.all(np.isfinite(G), axis=1)
    # supergradient check against random probes in the window
    rng = np.random.default_rng(seed)
    P = rng.uniform(window.lower, window.upper, size=(N_PROBES, window.dim))
    hp = ex.evaluate(h, P)
    finite = np.isfinite(hp)
    P, hp = P[finite], hp[finite]
    idx = np.flatnonzero(keep)
    for start in range(0, idx.size, 4096):
        sl = idx[start:start + 4096]
        lin = vals[sl, None] + G[sl] @ P.T - np.einsum("ij,ij->i", G[sl], Z[sl])[:, None]
        bad = np.any(hp[None, :] > lin + SUPERGRADIENT_TOL, axis=1)
        keep[sl[bad]] = False
    return vals, G, keep


def build_hhat(h_ave: ex.Expr, box: Box, grid_per_dim: int | None = None, *, base_point=None,
               tuy: bool = False, seed: int = 0) -> HhatEvaluator:
    """Sample the z-region of hhat on a grid of ``box`` (default 64 per axis, 24 for n = 4)."""
    n = box.dim
    if n > MAX_DIM:
        raise UnsupportedDimension(f"sampled hhat supports n <= {MAX_DIM}, got {n}")
    if grid_per_dim is None:
        grid_per_dim = 64 if n <= 3 else 24
    base = np.zeros(n) if base_point is None else np.asarray(base_point, dtype=float).ravel()
    window, notes = _sampling_window(box, base)

    axes = [np.unique(np.linspace(window.lower[i], window.upper[i], grid_per_dim)) for i in range(n)]
    Z = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, n)
    Z = np.vstack([Z, window.clip(base)[None, :]])

    vals = ex.evaluate(h_ave, Z)
    base_in = window.contains(base) and ex.evaluate(h_ave, base) > 0
    outside = vals < 0
    if base_in and outside.any():
        # boundary of {h_ave >= 0} between the base point and infeasible grid points
        Z = np.vstack([Z, _segment_boundary(h_ave, base, Z[outside])])

    settings = {"grid_per_dim": grid_per_dim, "seed": seed, "supergradient_tol": SUPERGRADIENT_TOL,
                "probes": N_PROBES}
    vals, G, keep = _admit_mask(h_ave, Z, window, tuy, seed)
    if not keep.any():
        raise EmptyZRegion("no sample z in the box satisfies h_ave(z) >= 0")
    rejected = int((~keep[np.isfinite(vals) & ((vals >= -1e-9) | tuy)]).sum())
    if rejected:
        log.info("supergradient check rejected %d samples", rejected)
    return HhatEvaluator(h_ave, window, base, Z[keep], vals[keep], G[keep], tuy, rejected, notes, settings)


def hhat_eval(ev: HhatEvaluator, X) -> float | np.ndarray:
    """min over samples of the linearisations at X (a point or rows of points)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    c = ev.intercepts
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], 512):
        blk = X[start:start + 512]
        out[start:start + 512] = np.min(blk @ ev.grads.T + c[None, :], axis=1)
    return float(out[0]) if single else out


def _local_search(ev: HhatEvaluator, x, iters):
    """Pattern search on z -> linearisation value at x, kept feasible."""
    h = ev.h_ave
    lin_all = ev.intercepts + ev.grads @ x
    z = ev.points[int(np.argmin(lin_all))].copy()
    best = float(lin_all.min())
    step = float(np.max(ev.box.upper - ev.box.lower)) / max(2, ev.settings.get("grid_per_dim", 64))
    n = z.size
    base_ok = ev.box.contains(ev.base_point) and ex.evaluate(h, ev.base_point) > 0

    def project(c):
        c = ev.box.clip(c)
        if ev.tuy:
            return c
        v = ex.evaluate(h, c)
        if v >= 0:
            return c
        if not base_ok:
            return None
        return _segment_boundary(h, ev.base_point, c[None, :])[0]

    def score(c):
        try:
            g = ex.grad_fd(h, c)
        except Exception:
            return math.inf
        v = ex.evaluate(h, c)
        return v + float(g @ (x - c))

    found = False
    for _ in range(iters):
        improved = False
        for j in range(n):
            for s in (step, -step):
                c = z.copy()
                c[j] += s
                c = project(c)
                if c is None:
                    continue
                val = score(c)
                if val < best - 1e-15:
                    z, best, improved, found = c, val, True, True
        if not improved:
            step *= 0.5
    return z if found else None


def strengthened_cut(ev: HhatEvaluator, rays: RaySystem, safety: float = 1e-6, rounds: int = 3,
                     lam_max: float = 1e9, instance_id=None) -> Cut:
    """Intersection cut of {hhat >= 0}; steps are shrunk by ``1 - safety``."""
    if not hhat_eval(ev, rays.apex) > 0:
        raise ApexNotInterior("hhat is not positive at the apex")
    steps = None
    for _ in range(rounds):
        new = np.array([ray_step(ev, rays.apex, r, lam_max) for r in rays.rays])
        if steps is not None and np.allclose(new, steps, rtol=1e-12, atol=0.0):
            steps = new
            break
        steps = new
        probes = [rays.apex + s * r for s, r in zip(steps, rays.rays) if math.isfinite(s)]
        if not probes:
            break
        ev = ev.refined(probes)
    shrunk = np.where(np.isinf(steps), steps, steps * (1.0 - safety))
    return cut_from_steps(
        shrunk, "ic+bounds", instance=instance_id, tuy=bool(ev.tuy), samples=len(ev),
        tolerances={"safety": safety, "supergradient": SUPERGRADIENT_TOL, "grid_per_dim": ev.settings.get("grid_per_dim")},
    )
