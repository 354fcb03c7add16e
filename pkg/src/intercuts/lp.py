"""LP relaxation, simplex tableau and the change of variables to nonbasic space.

Problems have the form ``max c.x  s.t.  A x = b,  lb <= x <= ub`` with finite
lower bounds. The solver is a dense bounded-variable primal simplex with
Bland's rule (two phases, artificial variables in phase one), which keeps it
deterministic and free of cycling at the sizes this package targets.

At the optimal vertex x_hat every nonbasic variable sits at a bound. Writing
``t_j >= 0`` for its distance from that bound (``x_j - lb_j`` at the lower,
``ub_j - x_j`` at the upper bound) gives ``x_B = x_hat_B + R t`` and moves the
vertex to the origin of t-space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import expr as ex
from .cutgen import Cut
from .errors import Infeasible, RankDeficient, Unbounded
from .strengthen import Box

TOL = 1e-9
MAX_ITERS = 10_000


def _num(v):
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
        return float(s)
    return float(v)


@dataclass(frozen=True)
class Instance:
    n: int
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    box: Box
    integer: frozenset = frozenset()
    nlcons: tuple = ()
    slacks: tuple = ()
    name: str = "instance"

    @classmethod
    def from_dict(cls, d, name=None):
        n = int(d["n"])
        c = np.array([_num(v) for v in d.get("c", [0] * n)], dtype=float)
        A = np.array([[_num(v) for v in row] for row in d.get("A", [])], dtype=float).reshape(-1, n)
        b = np.array([_num(v) for v in d.get("b", [])], dtype=float)
        lb = np.array([_num(v) for v in d.get("lb", [0] * n)], dtype=float)
        ub = np.array([_num(v) for v in d.get("ub", ["inf"] * n)], dtype=float)
        # indices in files are 1-based, like the variable names x1..xn
        ints = frozenset(int(i) - 1 for i in d.get("int", []))
        slacks = tuple(int(i) - 1 for i in d.get("slacks", []))
        nl = tuple(ex.parse(s, n) for s in d.get("nlcons", []))
        if A.shape[0] != b.size:
            raise ValueError("A and b have inconsistent sizes")
        if any(i < 0 or i >= n for i in ints | set(slacks)):
            raise ValueError("variable index out of range")
        return cls(n, c, A, b, Box(lb, ub), ints, nl, slacks, name or d.get("name", "instance"))

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), name=path.stem)


@dataclass(frozen=True)
class Tableau:
    basic: tuple
    nonbasic: tuple
    at_upper: tuple  # per nonbasic variable
    x_hat: np.ndarray
    R: np.ndarray  # len(basic) x len(nonbasic)

    @property
    def xB_hat(self):
        return self.x_hat[list(self.basic)]

    @property
    def signs(self):
        return np.array([-1.0 if u else 1.0 for u in self.at_upper])

    def directions(self):
        """Full-space direction of each nonbasic coordinate t_j (one per row)."""
        n = self.x_hat.size
        D = np.zeros((len(self.nonbasic), n))
        for j, k in enumerate(self.nonbasic):
            D[j, k] = self.signs[j]
        if self.basic:
            D[:, list(self.basic)] = self.R.T
        return D

    def lift(self, T):
        """Original-space points for nonbasic coordinates T (vector or rows)."""
        T = np.asarray(T, dtype=float)
        return self.x_hat + T @ self.directions()

    def nonbasic_box(self, box: Box) -> Box:
        """Bounds of t implied by each nonbasic variable's own bounds."""
        up = np.array([box.upper[k] - box.lower[k] for k in self.nonbasic], dtype=float)
        return Box(np.zeros(len(self.nonbasic)), up)


# ---------------------------------------------------------------------------
# simplex


class _Simplex:
    """Bounded-variable primal simplex on ``M y = rhs, 0 <= y <= U`` (maximise)."""

    def __init__(self, M, rhs, U, basis):
        self.M = M
        self.rhs = rhs
        self.U = U
        self.basis = list(basis)
        self.at_upper = np.zeros(M.shape[1], dtype=bool)

    def values(self):
        y = np.where(self.at_upper, self.U, 0.0)
        y[self.basis] = 0.0
        B = self.M[:, self.basis]
        y[self.basis] = np.linalg.solve(B, self.rhs - self.M @ y) if self.basis else []
        return y

    def reduced_costs(self, cost):
        B = self.M[:, self.basis]
        pi = np.linalg.solve(B.T, cost[self.basis]) if self.basis else np.zeros(0)
        return cost - self.M.T @ pi

    def run(self, cost, allowed=None):
        ncols = self.M.shape[1]
        allowed = np.ones(ncols, dtype=bool) if allowed is None else allowed
        for _ in range(MAX_ITERS):
            d = self.reduced_costs(cost)
            in_basis = np.zeros(ncols, dtype=bool)
            in_basis[self.basis] = True
            entering = None
            for j in range(ncols):
                if in_basis[j] or not allowed[j]:
                    continue
                if (not self.at_upper[j] and d[j] > TOL) or (self.at_upper[j] and d[j] < -TOL):
                    entering = j
                    break
            if entering is None:
                return
            self.step(entering)
        raise RuntimeError("simplex iteration limit reached")

    def step(self, j):
        y = self.values()
        sigma = -1.0 if self.at_upper[j] else 1.0
        w = np.linalg.solve(self.M[:, self.basis], self.M[:, j]) if self.basis else np.zeros(0)
        best = self.U[j]  # bound flip of the entering variable
        leave = None  # (row, leaves at upper bound)
        # ascending variable index, so the first minimiser is Bland's choice
        for r, k in sorted(enumerate(self.basis), key=lambda p: p[1]):
            rate = sigma * w[r]
            if rate > TOL:
                theta, to_upper = max(y[k], 0.0) / rate, False
            elif rate < -TOL and math.isfinite(self.U[k]):
                theta, to_upper = max(self.U[k] - y[k], 0.0) / -rate, True
            else:
                continue
            if theta < best - 1e-12:
                best, leave = theta, (r, to_upper)
        if not math.isfinite(best):
            raise Unbounded("LP relaxation is unbounded")
        if leave is None:
            self.at_upper[j] = not self.at_upper[j]
            return
        r, to_upper = leave
        k = self.basis[r]
        self.basis[r] = j
        self.at_upper[j] = False
        self.at_upper[k] = to_upper


def solve_lp(inst: Instance):
    """Optimal vertex, its tableau and the objective value."""
    n, A, lb, ub = inst.n, inst.A, inst.box.lower, inst.box.upper
    if not np.all(np.isfinite(lb)):
        raise ValueError("simplex variables need finite lower bounds")
    m = A.shape[0]
    if m and np.linalg.matrix_rank(A) < m:
        raise RankDeficient("equality constraints are linearly dependent")
    U = ub - lb
    rhs = inst.b - A @ lb
    flip = np.where(rhs < 0, -1.0, 1.0)
    Ms = A * flip[:, None]
    rhs = rhs * flip

    # phase one: artificials n..n+m-1 start in the basis
    M = np.hstack([Ms, np.eye(m)])
    Ufull = np.concatenate([U, np.full(m, np.inf)])
    sx = _Simplex(M, rhs, Ufull, range(n, n + m))
    cost1 = np.concatenate([np.zeros(n), -np.ones(m)])
    sx.run(cost1)
    y = sx.values()
    if y[n:].sum() > 1e-7 * max(1.0, np.abs(rhs).max(initial=0.0)):
        raise Infeasible("LP relaxation is infeasible")
    # pivot zero-level artificials out of the basis
    for r in range(m):
        k = sx.basis[r]
        if k < n:
            continue
        w_row = np.linalg.solve(M[:, sx.basis].T, np.eye(m)[r]) @ M[:, :n]
        cand = [j for j in range(n) if j not in sx.basis and abs(w_row[j]) > 1e-9]
        if not cand:
            raise RankDeficient("cannot drive artificial variable out of the basis")
        j = cand[0]
        sx.basis[r] = j
        sx.at_upper[j] = False
        sx.at_upper[k] = False
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    sx.U = np.concatenate([U, np.zeros(m)])

    cost2 = np.concatenate([inst.c, np.zeros(m)])
    sx.run(cost2, allowed)
    y = sx.values()[:n]
    x = lb + y
    d = sx.reduced_costs(cost2)[:n]

    basic = tuple(sx.basis)
    nonbasic = tuple(j for j in range(n) if j not in basic)
    at_upper = tuple(bool(sx.at_upper[j]) for j in nonbasic)
    for j, up in zip(nonbasic, at_upper):
        # optimality: no improving direction at the final vertex
        assert (d[j] <= TOL) if not up else (d[j] >= -TOL), f"reduced cost sign wrong for x{j + 1}"
    if m:
        B = A[:, list(basic)]
        N = A[:, list(nonbasic)]
        sig = np.array([-1.0 if u else 1.0 for u in at_upper])
        R = -np.linalg.solve(B, N) * sig[None, :] if nonbasic else np.zeros((m, 0))
    else:
        R = np.zeros((0, len(nonbasic)))
    # snap nonbasic values exactly onto their bounds
    for j, up in zip(nonbasic, at_upper):
        x[j] = ub[j] if up else lb[j]
    tab = Tableau(basic, nonbasic, at_upper, x, R)
    return tab, float(inst.c @ x)


# ---------------------------------------------------------------------------
# change of variables


def substitute_nonbasic(g: ex.Expr, tab: Tableau) -> ex.Expr:
    """``g`` rewritten over the nonbasic coordinates t (x1..x|N| in the result)."""
    mapping = {}
    sig = tab.signs
    for j, k in enumerate(tab.nonbasic):
        mapping[k] = ex.linear_combination([(sig[j], ex.Var(j)), (tab.x_hat[k], ex.ONE)])
    for r, k in enumerate(tab.basic):
        terms = [(tab.R[r, j], ex.Var(j)) for j in range(len(tab.nonbasic))]
        terms.append((tab.x_hat[k], ex.ONE))
        mapping[k] = ex.linear_combination(terms)
    return ex.substitute(g, mapping)


def map_cut_to_original(cut: Cut, tab: Tableau, inst: Instance | None = None) -> Cut:
    """Rewrite ``alpha.t >= rhs`` over the original variables.

    Variables listed as slacks in the instance are eliminated through the one
    equality row they appear in.
    """
    if cut.space != "nonbasic":
        raise ValueError("cut is not in nonbasic space")
    n = tab.x_hat.size
    coeffs = np.zeros(n)
    rhs = float(cut.rhs)
    for j, k in enumerate(tab.nonbasic):
        s = tab.signs[j]
        coeffs[k] += cut.coeffs[j] * s
        rhs += cut.coeffs[j] * s * tab.x_hat[k]
    if inst is not None:
        for s in inst.slacks:
            rows = np.flatnonzero(np.abs(inst.A[:, s]) > 0)
            if len(rows) != 1 or coeffs[s] == 0:
                continue
            r = rows[0]
            f = coeffs[s] / inst.A[r, s]
            coeffs = coeffs - f * inst.A[r]
            rhs -= f * inst.b[r]
            coeffs[s] = 0.0
    prov = dict(cut.provenance)
    return Cut(coeffs, rhs, "original", prov)
