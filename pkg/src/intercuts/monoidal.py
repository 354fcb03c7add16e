"""Monoidal strengthening of intersection cuts for one integer nonbasic variable.

Setting: ``h`` concave with ``h(0) > 0`` and the box ``[0, u]``. Every point
y of the zero set Y = {y in [0, u] : h(y) = 0} gives a disjunctive term
``grad h(y).x / grad h(y).y >= 1``; the intersection cut takes the
coefficient-wise max over Y. A lower bound

    beta(y) = min over [0, u] of grad h(y).x / grad h(y).y

on each term allows shifting terms by integer multiples of ``1 - beta(y)``,
which for a single integer variable x_k yields

    gamma_k = min(alpha_k, min over y of d_k h(y) / grad h(y).y + 1 - beta(y)).

Points with ``beta >= 1`` are redundant and dropped. Points with
``beta = -inf`` cannot be shifted; their ratios stay in the max.

Y is explored by sweeping directions of the nonnegative orthant from the
origin and root-finding h along each ray, followed by a pattern search over
directions to polish the extremal ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .cutgen import Cut
from .errors import ApexNotInterior, EmptyAfterRedundancyFilter, EmptyBoundary, InvalidConfig
from .strengthen import Box

RESIDUAL_TOL = 1e-8
ZERO_GRAD_TOL = 1e-9


@dataclass(frozen=True)
class MonoidalConfig:
    K: tuple = ()
    sos1: bool = False
    directions: int | None = None  # default: 720 for n = 2, 2000 otherwise
    refine_iters: int = 30
    keep_redundant_for_alpha: bool = False
    seed: int = 0

    def n_directions(self, n):
        if self.directions is not None:
            return int(self.directions)
        return 720 if n <= 2 else 2000


@dataclass(frozen=True)
class BoundarySample:
    h: ex.Expr
    box: Box
    h0: float
    directions: np.ndarray
    points: np.ndarray
    grads: np.ndarray
    inner: np.ndarray
    beta: np.ndarray
    settings: dict = field(default_factory=dict)

    @property
    def redundant(self):
        return self.beta >= 1.0

    @property
    def usable(self):
        return np.isfinite(self.beta)

    def ratios(self):
        return self.grads / self.inner[:, None]

    def __len__(self):
        return self.points.shape[0]

    def to_rows(self):
        """Rows for CSV export: y, grad, inner, beta, redundant, usable."""
        rows = []
        for y, g, d, b, r, u in zip(self.points, self.grads, self.inner, self.beta, self.redundant, self.usable):
            rows.append([*y, *g, d, b, int(r), int(u)])
        return rows


# ---------------------------------------------------------------------------
# directions


def sweep_directions(n, count, seed=0):
    """Unit directions covering the nonnegative orthant, axis directions included."""
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        t = np.linspace(0.0, 0.5 * math.pi, max(int(count), 2))
        D = np.column_stack([np.cos(t), np.sin(t)])
    elif n == 3:
        # Fibonacci lattice on the octant of the sphere
        i = np.arange(count) + 0.5
        z = i / count
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        r = np.sqrt(1.0 - z * z)
        D = np.abs(np.column_stack([r * np.cos(phi), r * np.sin(phi), z]))
    else:
        rng = np.random.default_rng(seed)
        D = np.abs(rng.standard_normal((int(count), n)))
    D = np.vstack([np.eye(n), D])
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    D[np.abs(D) < 1e-15] = 0.0
    return D


# ---------------------------------------------------------------------------
# boundary points


def _box_exit(D, upper):
    with np.errstate(divide="ignore", invalid="ignore"):
        lim = np.where(D > 0, upper[None, :] / D, np.inf)
    return lim.min(axis=1)


def _roots_along(h, D, upper, iters=200):
    """Zero of h(t d) for each direction row, or NaN when none lies in the box."""
    m = D.shape[0]
    t_exit = _box_exit(D, upper)
    lo = np.zeros(m)
    hi = np.where(np.isfinite(t_exit), t_exit, 1.0)
    active = np.ones(m, dtype=bool)
    # unbounded directions: bracket by doubling
    unb = ~np.isfinite(t_exit)
    while unb.any():
        vals = ex.evaluate(h, hi[unb, None] * D[unb])
        pos = vals >= 0
        idx = np.flatnonzero(unb)
        grow = idx[pos]
        lo[grow] = hi[grow]
        hi[grow] *= 2.0
        unb[idx[~pos]] = False
        too_far = hi > 1e9
        active &= ~(too_far & unb)
        unb &= ~too_far
    end_vals = ex.evaluate(h, hi[:, None] * D)
    active &= end_vals < 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        vals = ex.evaluate(h, mid[:, None] * D)
        ok = vals >= 0
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1.0)):
            break
    t = np.where(active, lo, np.nan)
    return t


def beta_value(grad, inner, upper):
    """Closed-form beta: (1/inner) * max over [0, u] of grad.x."""
    grad = np.asarray(grad, dtype=float)
    upper = np.asarray(upper, dtype=float)
    thresh = ZERO_GRAD_TOL * max(1.0, float(np.abs(grad).max()))
    pos = grad > thresh
    if np.any(pos & ~np.isfinite(upper)):
        return -math.inf
    top = float(np.sum(np.where(pos, grad * np.where(np.isfinite(upper), upper, 0.0), 0.0)))
    return top / inner


def beta(entry, box: Box) -> float:
    """beta for a boundary entry given as (y, grad, inner) or a dict with those keys."""
    if isinstance(entry, dict):
        grad, inner = entry["gradient"], entry["inner"]
    else:
        _, grad, inner = entry
    return beta_value(grad, inner, box.upper)


def _check_normal_form(h, box):
    if np.any(box.lower != 0):
        raise InvalidConfig("monoidal strengthening expects lower bounds 0")
    h0 = ex.evaluate(h, np.zeros(box.dim))
    if not h0 > 0:
        raise ApexNotInterior(f"h(0) = {h0} is not positive")
    return h0


def _assemble(h, box, h0, D, t):
    """Boundary entries for directions D with roots t; also returns the surviving row indices."""
    idx = np.flatnonzero(np.isfinite(t))
    Y = t[idx, None] * D[idx]
    vals = ex.evaluate(h, Y)
    good = np.abs(vals) <= RESIDUAL_TOL
    idx, Y = idx[good], Y[good]
    G, ok = ex.grad_fd_batch(h, Y)
    idx, Y, G = idx[ok], Y[ok], G[ok]
    inner = np.einsum("ij,ij->i", G, Y)
    good = inner < 0
    idx, Y, G, inner = idx[good], Y[good], G[good], inner[good]
    B = np.array([beta_value(g, d, box.upper) for g, d in zip(G, inner)])
    return idx, Y, G, inner, B


def sweep_boundary(h: ex.Expr, box: Box, cfg: MonoidalConfig = MonoidalConfig()) -> BoundarySample:
    """Sample Y = {y in [0, u] : h(y) = 0} by root-finding along orthant rays."""
    h0 = _check_normal_form(h, box)
    D = sweep_directions(box.dim, cfg.n_directions(box.dim), cfg.seed)
    t = _roots_along(h, D, box.upper)
    idx, Y, G, inner, B = _assemble(h, box, h0, D, t)
    D = D[idx]
    if Y.shape[0] == 0:
        raise EmptyBoundary("h stays positive on [0, u]; no boundary point")
    return BoundarySample(h, box, h0, D, Y, G, inner, B, {"directions": int(len(t))})


def _points_at(sample, C):
    """Entries (y, grad, inner, beta) for the rays through the rows of C; None where none exists."""
    C = np.clip(np.atleast_2d(np.asarray(C, dtype=float)), 0.0, None)
    nrm = np.linalg.norm(C, axis=1)
    out = [None] * C.shape[0]
    rows = np.flatnonzero(nrm > 0)
    if rows.size == 0:
        return out
    D = C[rows] / nrm[rows, None]
    t = _roots_along(sample.h, D, sample.box.upper)
    idx, Y, G, inner, B = _assemble(sample.h, sample.box, sample.h0, D, t)
    for i, y, g, d, b in zip(idx, Y, G, inner, B):
        out[rows[i]] = (y, g, d, b)
    return out


def _polish(sample, d0, objective, iters, maximize):
    """Pattern search over orthant directions starting at d0."""
    sign = 1.0 if maximize else -1.0
    best_d = np.asarray(d0, dtype=float)
    entry = _points_at(sample, best_d)[0]
    if entry is None:
        return -math.inf * sign
    best = objective(*entry)
    if not math.isfinite(best):
        return best
    n = best_d.size
    if n == 1:
        return best
    m = max(len(sample.directions), 2)
    step = (0.5 * math.pi / m) if n == 2 else 1.0 / math.sqrt(m)
    moves = np.vstack([np.eye(n), -np.eye(n)])
    for _ in range(iters):
        C = np.clip(best_d[None, :] + step * moves, 0.0, None)
        improved = False
        for c, e in zip(C, _points_at(sample, C)):
            if e is None:
                continue
            val = objective(*e)
            if math.isfinite(val) and sign * (val - best) > 0:
                best, best_d, improved = val, c / np.linalg.norm(c), True
        if not improved:
            step *= 0.5
            if step < 1e-12:
                break
    return best


def alpha_coeffs(sample: BoundarySample, *, keep_redundant: bool = False, refine_iters: int = 30) -> np.ndarray:
    """alpha_j = max over Y of d_j h(y) / grad h(y).y, polished locally."""
    mask = np.ones(len(sample), dtype=bool) if keep_redundant else ~sample.redundant
    if not mask.any():
        raise EmptyAfterRedundancyFilter("every boundary term is redundant")
    R = sample.ratios()
    alpha = np.empty(sample.box.dim)
    for j in range(sample.box.dim):
        vals = np.where(mask, R[:, j], -np.inf)
        i = int(np.argmax(vals))

        def obj(y, g, d, b, j=j):
            if not keep_redundant and b >= 1.0:
                return -math.inf
            return g[j] / d

        alpha[j] = max(vals[i], _polish(sample, sample.directions[i], obj, refine_iters, maximize=True))
    return alpha


def gamma_coeff(sample: BoundarySample, k: int, alpha=None, *, refine_iters: int = 30) -> float:
    """Strengthened coefficient of the integer variable x_k (0-based)."""
    if alpha is None:
        alpha = alpha_coeffs(sample, refine_iters=refine_iters)
    alpha_k = float(alpha[k])
    R = sample.ratios()[:, k]
    live = ~sample.redundant
    usable = live & sample.usable
    if not usable.any():
        return alpha_k
    shifted = np.where(usable, R + 1.0 - sample.beta, np.inf)
    i = int(np.argmin(shifted))

    def obj(y, g, d, b):
        if b >= 1.0 or not math.isfinite(b):
            return math.inf
        return g[k] / d + 1.0 - b

    best = min(shifted[i], _polish(sample, sample.directions[i], obj, refine_iters, maximize=False))
    # terms with unbounded beta keep multiplier 0, so their ratios bound gamma from below
    unusable = live & ~sample.usable
    floor = float(R[unusable].max()) if unusable.any() else -math.inf
    return min(alpha_k, max(best, floor))


def monoidal_cut(h: ex.Expr, box: Box, cfg: MonoidalConfig, sample: BoundarySample | None = None) -> list:
    """One strengthened cut per k in cfg.K, or a single cut when cfg.sos1.

    A boundary sample already swept for ``h`` and ``box`` can be passed in.
    """
    if not cfg.K:
        raise InvalidConfig("the integer index set K is empty")
    if any(k < 0 or k >= box.dim for k in cfg.K):
        raise InvalidConfig(f"K = {cfg.K} out of range for dimension {box.dim}")
    if sample is None:
        sample = sweep_boundary(h, box, cfg)
    alpha = alpha_coeffs(sample, keep_redundant=cfg.keep_redundant_for_alpha, refine_iters=cfg.refine_iters)
    gammas = {k: gamma_coeff(sample, k, alpha, refine_iters=cfg.refine_iters) for k in cfg.K}
    prov = {
        "method": "ic+monoidal",
        "alpha": [float(a) for a in alpha],
        "boundary_points": len(sample),
        "tolerances": {"residual": RESIDUAL_TOL, "directions": sample.settings["directions"],
                       "refine_iters": cfg.refine_iters},
    }
    groups = [tuple(cfg.K)] if cfg.sos1 else [(k,) for k in cfg.K]
    cuts = []
    for group in groups:
        coeffs = alpha.copy()
        for k in group:
            coeffs[k] = min(gammas[k], alpha[k])
        cuts.append(Cut(coeffs, 1.0, "nonbasic", dict(prov, strengthened=list(group), sos1=cfg.sos1)))
    return cuts
