"""Concave underestimators and convex overestimators tight at a point.

The construction recurses over the factorable structure of an expression:

* sums combine member-wise, negative coefficients swap the two members;
* squares use the tangent of ``t**2`` at the base value for the under member
  and ``max(u**2, o**2)`` for the over member;
* products go through ``4ab = (a+b)**2 - (a-b)**2``;
* a univariate ``f(g)`` takes the min (resp. max) of the atom estimator of f
  applied to both members of g.

Atom estimators of the univariate library are tight at an arbitrary value v:
convex functions get (tangent, f), concave ones (f, tangent), and cos/sin get
``f -+ (z - v)**2 / 2`` with the constant bound substituted when f(v) is the
global max (or min).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import expr as ex
from .errors import AtomUndefined, EvaluationError
from .expr import (
    ONE,
    Apply,
    Constant,
    Expr,
    Power,
    Product,
    Sum,
    UnivariateFunc,
    Var,
)


@dataclass(frozen=True)
class EstimatorPair:
    under: Expr
    over: Expr
    base_point: np.ndarray
    value_at_base: float

    def __repr__(self):
        return f"EstimatorPair(under={ex.to_text(self.under)!r}, over={ex.to_text(self.over)!r}, value={self.value_at_base!r})"


def _same_base(pairs):
    base = None
    for p in pairs:
        if base is None:
            base = p.base_point
        elif not np.array_equal(base, p.base_point):
            raise ValueError("estimator pairs have different base points")
    return base


def _is_constant_pair(p):
    return isinstance(p.under, Constant) and isinstance(p.over, Constant) and p.under.value == p.over.value


# ---------------------------------------------------------------------------
# combination rules


def rule_sum(pairs, base_point=None) -> EstimatorPair:
    """Estimators of ``sum c_i f_i`` from (c_i, pair_i)."""
    pairs = list(pairs)
    base = _same_base([p for _, p in pairs])
    if base is None:
        base = None if base_point is None else np.asarray(base_point, dtype=float)
    under, over = [], []
    value = 0.0
    if all(p.under is p.over for _, p in pairs):
        for c, p in pairs:
            under.append((float(c), p.under))
            value += float(c) * p.value_at_base
        shared = ex.linear_combination(under)
        return EstimatorPair(shared, shared, base, value)
    for c, p in pairs:
        c = float(c)
        if c >= 0:
            under.append((c, p.under))
            over.append((c, p.over))
        else:
            under.append((c, p.over))
            over.append((c, p.under))
        value += c * p.value_at_base
    return EstimatorPair(ex.linear_combination(under), ex.linear_combination(over), base, value)


def _square(e):
    if isinstance(e, Constant):
        return Constant(e.value * e.value)
    return Power(e, 2)


def rule_square(p: EstimatorPair) -> EstimatorPair:
    """Estimators of ``f**2`` given estimators of f."""
    v = p.value_at_base
    # the tangent t**2 >= v**2 + 2v(t - v) is increasing in t when v > 0,
    # so it is fed the under member; for v <= 0 it is fed the over member
    inner = p.under if v > 0 else p.over
    under = ex.linear_combination([(2.0 * v, inner), (-v * v, ONE)])
    if p.under is p.over:
        over = _square(p.under)
    else:
        over = ex.pmax(_square(p.under), _square(p.over))
    return EstimatorPair(under, over, p.base_point, v * v)


def rule_product(a: EstimatorPair, b: EstimatorPair) -> EstimatorPair:
    """Estimators of ``f*g`` through the polarization identity."""
    _same_base([a, b])
    if _is_constant_pair(a):
        return rule_sum([(a.under.value, b)])
    if _is_constant_pair(b):
        return rule_sum([(b.under.value, a)])
    s = rule_sum([(1.0, a), (1.0, b)])
    d = rule_sum([(1.0, a), (-1.0, b)])
    out = rule_sum([(0.25, rule_square(s)), (-0.25, rule_square(d))])
    # value_at_base from the identity may differ from a*b in the last bits
    return EstimatorPair(out.under, out.over, out.base_point, a.value_at_base * b.value_at_base)


# ---------------------------------------------------------------------------
# univariate atoms


@dataclass(frozen=True)
class _Atom:
    """Atom estimator builders; ``slope`` is set when the member is affine."""

    ave: Callable[[Expr], Expr]
    vex: Callable[[Expr], Expr]
    ave_slope: Optional[float] = None
    vex_slope: Optional[float] = None


def _fapply(func, z):
    if isinstance(z, Constant):
        with np.errstate(all="ignore"):
            val = float(ex._apply_values(func, np.array([z.value]))[0])
        if math.isnan(val):
            raise EvaluationError(f"{func.value}({z.value}) is NaN")
        return Constant(val)
    return Apply(func, z)


def _affine(slope, intercept):
    return lambda z: ex.linear_combination([(slope, z), (intercept, ONE)])


def _shifted_square(z, v):
    return _square(ex.linear_combination([(1.0, z), (-v, ONE)]))


def _atom(func: UnivariateFunc, v: float) -> _Atom:
    if not math.isfinite(v):
        raise AtomUndefined(f"{func.value} has no estimator at non-finite value {v}")
    if func is UnivariateFunc.EXP:
        ev = math.exp(v)
        return _Atom(_affine(ev, ev * (1.0 - v)), lambda z: _fapply(func, z), ave_slope=ev)
    if func is UnivariateFunc.LOG:
        if v <= 0:
            raise AtomUndefined(f"log has no estimator at {v} <= 0")
        return _Atom(lambda z: _fapply(func, z), _affine(1.0 / v, math.log(v) - 1.0), vex_slope=1.0 / v)
    if func is UnivariateFunc.SQRT:
        if v <= 0:
            raise AtomUndefined(f"sqrt has no estimator at {v} <= 0")
        r = math.sqrt(v)
        return _Atom(lambda z: _fapply(func, z), _affine(0.5 / r, 0.5 * r), vex_slope=0.5 / r)
    if func is UnivariateFunc.ABS:
        s = float(np.sign(v))
        return _Atom(_affine(s, 0.0), lambda z: _fapply(func, z), ave_slope=s)
    if func in (UnivariateFunc.COS, UnivariateFunc.SIN):
        fv = math.cos(v) if func is UnivariateFunc.COS else math.sin(v)
        # |f''| <= 1, so f -+ (z - v)^2 / 2 are concave / convex and tight at v
        if fv == -1.0:
            ave = lambda z: Constant(-1.0)  # noqa: E731
        else:
            ave = lambda z: ex.linear_combination([(1.0, _fapply(func, z)), (-0.5, _shifted_square(z, v))])  # noqa: E731
        if fv == 1.0:
            vex = lambda z: Constant(1.0)  # noqa: E731
        else:
            vex = lambda z: ex.linear_combination([(1.0, _fapply(func, z)), (0.5, _shifted_square(z, v))])  # noqa: E731
        return _Atom(ave, vex)
    raise AtomUndefined(f"no estimator rule for {func.value}")


def univariate_atom(func, v: float):
    """``(f_ave, f_vex)`` as expressions in the single variable z = x1."""
    if isinstance(func, str):
        func = ex.PUBLIC_FUNCS[func]
    a = _atom(func, float(v))
    z = Var(0)
    return a.ave(z), a.vex(z)


def _compose_member(build, slope, lo, hi, lower):
    """min (lower=True) or max of ``build`` over the interval [lo, hi].

    ``build`` is concave for the min and convex for the max, so the extremum
    sits at an endpoint. When ``build`` is affine the endpoint is known
    up front because ``lo <= hi`` everywhere.
    """
    if lo is hi:
        return build(lo)
    if slope is not None:
        if slope == 0:
            return build(lo)
        return build(lo if (slope > 0) == lower else hi)
    a, b = build(lo), build(hi)
    return ex.pmin(a, b) if lower else ex.pmax(a, b)


def rule_compose(func, g: EstimatorPair) -> EstimatorPair:
    """Estimators of ``f(g)`` for a univariate library function f."""
    if isinstance(func, str):
        func = ex.PUBLIC_FUNCS[func]
    v = g.value_at_base
    a = _atom(func, v)
    under = _compose_member(a.ave, a.ave_slope, g.under, g.over, lower=True)
    over = _compose_member(a.vex, a.vex_slope, g.under, g.over, lower=False)
    fv = float(ex._apply_values(func, np.array([v]))[0])
    return EstimatorPair(under, over, g.base_point, fv)


# ---------------------------------------------------------------------------
# top level


def _nsd(H, tol=1e-12):
    if H.size == 0:
        return True
    scale = max(1.0, float(np.abs(H).max()))
    return float(np.linalg.eigvalsh(H).max()) <= tol * scale


def _split_scale(node):
    c = 1.0
    while isinstance(node, Sum) and len(node.terms) == 1:
        c *= node.terms[0][0]
        node = node.terms[0][1]
    return c, node


def estimate(e: Expr, base_point, *, quadratic_shortcut: bool = True) -> EstimatorPair:
    """Concave underestimator and convex overestimator of ``e`` tight at ``base_point``.

    With ``quadratic_shortcut`` a quadratic that is already concave (convex)
    serves as its own under (over) member instead of the rule-based one.
    """
    x = np.asarray(base_point, dtype=float).ravel()
    if ex.has_minmax(e):
        raise ValueError("estimate expects an expression without min/max nodes")
    if ex.dimension_of(e) > x.size:
        raise ValueError(f"base point has dimension {x.size}, expression needs {ex.dimension_of(e)}")
    # node values at the base point, evaluated once on the shared DAG
    values = {}
    with np.errstate(all="ignore"):
        for node in ex.iter_nodes(e):
            if isinstance(node, Constant):
                val = node.value
            elif isinstance(node, Var):
                val = float(x[node.index])
            elif isinstance(node, Sum):
                val = 0.0
                for c, ch in node.terms:
                    val = val + c * values[id(ch)]
            elif isinstance(node, Product):
                val = values[id(node.left)] * values[id(node.right)]
            elif isinstance(node, Power):
                val = ex._ipow(values[id(node.child)], node.exponent)
            elif isinstance(node, Apply):
                val = float(ex._apply_values(node.func, np.array([values[id(node.child)]]))[0])
            else:
                raise TypeError(node)
            if not math.isfinite(val):
                raise EvaluationError(f"{ex.to_text(node)[:60]} is not finite at the base point")
            values[id(node)] = val

    memo = {}
    power_memo = {}

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Constant, Var)):
            out = EstimatorPair(node, node, x, values[key])
        elif isinstance(node, Sum):
            out = rule_sum([(c, go(ch)) for c, ch in node.terms], base_point=x)
        elif isinstance(node, Product):
            # scalar factors are pulled out first; polarization is not
            # invariant under rescaling the factors
            ca, a = _split_scale(node.left)
            cb, b = _split_scale(node.right)
            out = rule_product(go(a), go(b))
            if ca * cb != 1.0:
                out = rule_sum([(ca * cb, out)])
                out = EstimatorPair(out.under, out.over, x, values[key])
        elif isinstance(node, Power):
            out = go_power(node.child, node.exponent)
        elif isinstance(node, Apply):
            if node.func.value not in ex.PUBLIC_FUNCS:
                raise AtomUndefined(f"no estimator rule for {node.func.value}")
            out = rule_compose(node.func, go(node.child))
        else:
            raise TypeError(node)
        memo[key] = out
        return out

    def go_power(child, n):
        key = (id(child), n)
        if key in power_memo:
            return power_memo[key]
        if n == 1:
            out = go(child)
        elif n % 2 == 0:
            out = rule_square(go_power(child, n // 2))
        else:
            out = rule_product(go(child), go_power(child, n - 1))
        power_memo[key] = out
        return out

    pair = go(e)
    pair = EstimatorPair(pair.under, pair.over, x, values[id(e)])
    if quadratic_shortcut:
        q = ex.as_quadratic(e, x.size)
        if q is not None:
            _, _, H = q
            under, over = pair.under, pair.over
            if _nsd(H):
                under = e
            if _nsd(-H):
                over = e
            pair = EstimatorPair(under, over, x, pair.value_at_base)
    return pair


def estimate_text(text: str, base_point, **kw) -> EstimatorPair:
    x = np.atleast_1d(np.asarray(base_point, dtype=float))
    return estimate(ex.parse(text, x.size), x, **kw)
