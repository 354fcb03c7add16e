"""Factorable-function expressions: DAG nodes, parser, printer, evaluation, derivatives.

Expressions are immutable and may share sub-nodes, so every traversal here is
memoised on node identity. Evaluation is vectorised over a batch of points and
uses extended-real semantics: ``log`` and ``sqrt`` return ``-inf`` outside
their domain, infinities propagate, and any NaN raises ``EvaluationError``.

Grammar accepted by :func:`parse`::

    expr   := term (('+'|'-') term)*
    term   := unary (('*' unary) | ('/' number))*
    unary  := '-'? factor
    factor := base ('^' posint)?
    base   := number | x<k> | func '(' expr ')' | '(' expr ')'

with ``func`` one of cos, sin, exp, log, sqrt, abs. Division is only allowed
by a numeric literal. With ``extended=True`` the parser also accepts
``min{a, b}`` and ``max{a, b}``, which is what :func:`to_text` emits for
estimator expressions.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EvaluationError, FDGradientError, MinMaxNotDifferentiable, ParseError


class UnivariateFunc(enum.Enum):
    COS = "cos"
    SIN = "sin"
    EXP = "exp"
    LOG = "log"
    SQRT = "sqrt"
    ABS = "abs"
    # derivative helpers, never produced by the parser
    RECIP = "recip"
    SIGN = "sign"


PUBLIC_FUNCS = {f.value: f for f in UnivariateFunc if f not in (UnivariateFunc.RECIP, UnivariateFunc.SIGN)}


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True, repr=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple  # of (coefficient, Expr)


@dataclass(frozen=True)
class Product(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Power(Expr):
    child: Expr
    exponent: int


@dataclass(frozen=True)
class Apply(Expr):
    func: UnivariateFunc
    child: Expr


@dataclass(frozen=True)
class PointwiseMin(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class PointwiseMax(Expr):
    left: Expr
    right: Expr


ZERO = Constant(0.0)
ONE = Constant(1.0)


# ---------------------------------------------------------------------------
# construction helpers


def const(value) -> Constant:
    return Constant(float(value))


def var(index: int) -> Var:
    return Var(int(index))


def linear_combination(terms) -> Expr:
    """Build ``sum c_i * e_i``, dropping zero coefficients and folding constants.

    Constant children are collected into one trailing constant term. A lone
    ``1 * e`` collapses to ``e``.
    """
    out = []
    offset = 0.0
    for c, e in terms:
        c = float(c)
        if c == 0.0:
            continue
        if isinstance(e, Constant):
            offset += c * e.value
        else:
            out.append((c, e))
    if offset != 0.0 or not out:
        if not out:
            return Constant(offset)
        if offset < 0:
            out.append((-1.0, Constant(-offset)))
        else:
            out.append((1.0, Constant(offset)))
    if len(out) == 1 and out[0][0] == 1.0:
        return out[0][1]
    return Sum(tuple(out))


def scale(c, e: Expr) -> Expr:
    return linear_combination([(c, e)])


def add(*exprs: Expr) -> Expr:
    return linear_combination([(1.0, e) for e in exprs])


def sub(a: Expr, b: Expr) -> Expr:
    return linear_combination([(1.0, a), (-1.0, b)])


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(a.value * b.value)
    if isinstance(a, Constant):
        return scale(a.value, b)
    if isinstance(b, Constant):
        return scale(b.value, a)
    return Product(a, b)


def power(e: Expr, n: int) -> Expr:
    n = int(n)
    if n < 0:
        raise ValueError("negative exponents are not supported")
    if n == 0:
        return ONE
    if n == 1:
        return e
    if isinstance(e, Constant):
        return Constant(_ipow(e.value, n))
    return Power(e, n)


def apply(func, e: Expr) -> Expr:
    if isinstance(func, str):
        func = PUBLIC_FUNCS[func]
    return Apply(func, e)


def pmin(a: Expr, b: Expr) -> Expr:
    if a is b:
        return a
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(min(a.value, b.value))
    return PointwiseMin(a, b)


def pmax(a: Expr, b: Expr) -> Expr:
    if a is b:
        return a
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(max(a.value, b.value))
    return PointwiseMax(a, b)


def _children(e: Expr):
    if isinstance(e, Sum):
        return [c for _, c in e.terms]
    if isinstance(e, (Product, PointwiseMin, PointwiseMax)):
        return [e.left, e.right]
    if isinstance(e, (Power, Apply)):
        return [e.child]
    return []


def iter_nodes(e: Expr):
    """Yield every distinct node once (post-order)."""
    seen = set()
    stack = [(e, False)]
    while stack:
        node, done = stack.pop()
        if id(node) in seen:
            continue
        if done:
            seen.add(id(node))
            yield node
            continue
        stack.append((node, True))
        for ch in _children(node):
            if id(ch) not in seen:
                stack.append((ch, False))


def dimension_of(e: Expr) -> int:
    """Smallest n such that every Var index is < n."""
    idx = [node.index for node in iter_nodes(e) if isinstance(node, Var)]
    return max(idx) + 1 if idx else 0


def has_minmax(e: Expr) -> bool:
    return any(isinstance(node, (PointwiseMin, PointwiseMax)) for node in iter_nodes(e))


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace ``Var(k)`` by ``mapping[k]`` wherever k is a key; shares results."""
    memo = {}

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Var):
            out = mapping.get(node.index, node)
        elif isinstance(node, Constant):
            out = node
        elif isinstance(node, Sum):
            out = Sum(tuple((c, go(ch)) for c, ch in node.terms))
        elif isinstance(node, Product):
            out = Product(go(node.left), go(node.right))
        elif isinstance(node, Power):
            out = Power(go(node.child), node.exponent)
        elif isinstance(node, Apply):
            out = Apply(node.func, go(node.child))
        elif isinstance(node, PointwiseMin):
            out = PointwiseMin(go(node.left), go(node.right))
        elif isinstance(node, PointwiseMax):
            out = PointwiseMax(go(node.left), go(node.right))
        else:
            raise TypeError(f"unknown node {node!r}")
        memo[key] = out
        return out

    return go(e)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x[1-9][0-9]*)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(){},]))"
)


def _tokenize(text):
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, dimension, extended):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = dimension
        self.extended = extended

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return e

    def expr(self):
        first = self.term()
        rest = []
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            sign = 1.0 if self.take()[1] == "+" else -1.0
            rest.append((sign, self.term()))
        if not rest:
            return first
        entries = []
        for sign, t in [(1.0, first)] + rest:
            # fold a leading numeric coefficient into the sum entry; only
            # sign flips are applied so values are bitwise unchanged
            if isinstance(t, Sum) and len(t.terms) == 1:
                c, inner = t.terms[0]
                entries.append((sign * c, inner))
            else:
                entries.append((sign, t))
        return Sum(tuple(entries))

    def term(self):
        e = self.unary()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val == "*":
                self.take()
                e = self._times(e, self.unary())
            elif kind == "op" and val == "/":
                self.take()
                kind, val, pos = self.take()
                if kind != "num":
                    raise ParseError("division is only allowed by a number literal", pos)
                d = float(val)
                if d == 0.0:
                    raise ParseError("division by zero", pos)
                e = self._times(e, Constant(1.0 / d))
            else:
                return e

    @staticmethod
    def _times(a, b):
        if isinstance(a, Constant) and isinstance(b, Constant):
            return Constant(a.value * b.value)
        if isinstance(a, Constant):
            return Sum(((a.value, b),))
        if isinstance(b, Constant):
            return Sum(((b.value, a),))
        return Product(a, b)

    def unary(self):
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            f = self.factor()
            if isinstance(f, Constant):
                return Constant(-f.value)
            return Sum(((-1.0, f),))
        return self.factor()

    def factor(self):
        base = self.base()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            kind, val, pos = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", val):
                raise ParseError("exponent must be a nonnegative integer literal", pos)
            k = int(val)
            if k == 0:
                return ONE
            if k == 1:
                return base
            if isinstance(base, Constant):
                return Constant(_ipow(base.value, k))
            return Power(base, k)
        return base

    def base(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Constant(float(val))
        if kind == "var":
            k = int(val[1:])
            if k > self.n:
                raise ParseError(f"variable {val} out of range for dimension {self.n}", pos)
            return Var(k - 1)
        if kind == "name":
            if self.extended and val in ("min", "max"):
                self.expect("{")
                a = self.expr()
                self.expect(",")
                b = self.expr()
                self.expect("}")
                return PointwiseMin(a, b) if val == "min" else PointwiseMax(a, b)
            if val not in PUBLIC_FUNCS:
                raise ParseError(f"unknown function {val!r}", pos)
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Apply(PUBLIC_FUNCS[val], arg)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected token {val or 'end of input'!r}", pos)


def parse(text: str, dimension: int, *, extended: bool = False) -> Expr:
    """Parse ``text`` into an expression over variables x1..x<dimension>."""
    return _Parser(text, dimension, extended).parse()


# ---------------------------------------------------------------------------
# printing

_ATOM, _FACTOR, _TERM, _EXPR = range(4)


def _num(v):
    return repr(float(v))


def to_text(e: Expr) -> str:
    """Print in the input grammar (min{,}/max{,} for estimator nodes).

    Floats are printed with ``repr`` so parsing the text back reproduces the
    same values bit for bit.
    """

    def wrap(s, need, have):
        return f"({s})" if have > need else s

    def go(node, ctx):
        if isinstance(node, Constant):
            s = _num(node.value)
            return wrap(s, ctx, _TERM if node.value < 0 or s.startswith("-") else _ATOM)
        if isinstance(node, Var):
            return f"x{node.index + 1}"
        if isinstance(node, Apply):
            return f"{node.func.value}({go(node.child, _EXPR)})"
        if isinstance(node, (PointwiseMin, PointwiseMax)):
            name = "min" if isinstance(node, PointwiseMin) else "max"
            return f"{name}{{{go(node.left, _EXPR)}, {go(node.right, _EXPR)}}}"
        if isinstance(node, Power):
            return wrap(f"{go(node.child, _ATOM)}^{node.exponent}", ctx, _FACTOR)
        if isinstance(node, Product):
            s = f"{go(node.left, _FACTOR)}*{go(node.right, _ATOM)}"
            return wrap(s, ctx, _FACTOR)
        if isinstance(node, Sum):
            parts = []
            for i, (c, ch) in enumerate(node.terms):
                neg = c < 0 or (c == 0 and math.copysign(1.0, c) < 0)
                mag = -c if neg else c
                if mag == 1.0:
                    body = go(ch, _FACTOR if (neg or i > 0) else _TERM)
                else:
                    body = f"{_num(mag)}*{go(ch, _ATOM)}"
                if i == 0:
                    parts.append(("-" + body) if neg else body)
                else:
                    parts.append((" - " if neg else " + ") + body)
            s = "".join(parts)
            if len(node.terms) == 1 and not node.terms[0][0] < 0:
                return wrap(s, ctx, _FACTOR)
            return wrap(s, ctx, _EXPR)
        raise TypeError(f"unknown node {node!r}")

    return go(e, _EXPR)


# ---------------------------------------------------------------------------
# evaluation


def _ipow(x, n):
    """x**n by repeated squaring (n >= 1), valid for floats and arrays."""
    result = None
    base = x
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return result


def _apply_values(func, v):
    if func is UnivariateFunc.COS:
        return np.cos(v)
    if func is UnivariateFunc.SIN:
        return np.sin(v)
    if func is UnivariateFunc.EXP:
        return np.exp(v)
    if func is UnivariateFunc.LOG:
        return np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), -np.inf)
    if func is UnivariateFunc.SQRT:
        return np.where(v >= 0, np.sqrt(np.where(v >= 0, v, 0.0)), -np.inf)
    if func is UnivariateFunc.ABS:
        return np.abs(v)
    if func is UnivariateFunc.RECIP:
        return 1.0 / v
    if func is UnivariateFunc.SIGN:
        return np.sign(v)
    raise TypeError(func)


def _eval_batch(e: Expr, X: np.ndarray) -> np.ndarray:
    """Evaluate on the rows of X (shape (m, n)); returns shape (m,)."""
    m = X.shape[0]
    cache = {}
    for node in iter_nodes(e):
        if isinstance(node, Constant):
            val = np.full(m, node.value)
        elif isinstance(node, Var):
            if node.index >= X.shape[1]:
                raise IndexError(f"x{node.index + 1} needs dimension {node.index + 1}, got {X.shape[1]}")
            val = X[:, node.index]
        elif isinstance(node, Sum):
            val = np.zeros(m)
            for c, ch in node.terms:
                val = val + c * cache[id(ch)]
        elif isinstance(node, Product):
            val = cache[id(node.left)] * cache[id(node.right)]
        elif isinstance(node, Power):
            val = _ipow(cache[id(node.child)], node.exponent)
        elif isinstance(node, Apply):
            val = _apply_values(node.func, cache[id(node.child)])
        elif isinstance(node, PointwiseMin):
            val = np.minimum(cache[id(node.left)], cache[id(node.right)])
        elif isinstance(node, PointwiseMax):
            val = np.maximum(cache[id(node.left)], cache[id(node.right)])
        else:
            raise TypeError(f"unknown node {node!r}")
        cache[id(node)] = val
    return cache[id(e)]


def evaluate(e: Expr, p) -> float | np.ndarray:
    """Value of ``e`` at a point (1-D input) or at each row of a 2-D array."""
    X = np.asarray(p, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    with np.errstate(all="ignore"):
        val = _eval_batch(e, X)
    if np.isnan(val).any():
        raise EvaluationError(f"NaN while evaluating {to_text(e)[:80]}")
    return float(val[0]) if single else val


def compile_expr(e: Expr) -> Callable:
    """Return ``f(p)`` equivalent to ``evaluate(e, p)``."""
    return lambda p: evaluate(e, p)


# ---------------------------------------------------------------------------
# derivatives


def _central(e, P, h):
    n = P.shape[-1]
    m = P.shape[0]
    eye = np.eye(n) * h
    plus = (P[:, None, :] + eye[None, :, :]).reshape(-1, n)
    minus = (P[:, None, :] - eye[None, :, :]).reshape(-1, n)
    with np.errstate(all="ignore"):
        fp = _eval_batch(e, plus).reshape(m, n)
        fm = _eval_batch(e, minus).reshape(m, n)
    ok = np.isfinite(fp).all(axis=1) & np.isfinite(fm).all(axis=1)
    with np.errstate(all="ignore"):
        g = (fp - fm) / (2.0 * h)
    return g, ok


def grad_fd_batch(e: Expr, P, step: float = 1e-6):
    """Central-difference gradients at each row of P.

    Returns ``(G, ok)``; rows whose stencil touched an infinite value are
    retried with a Richardson-extrapolated stencil at ``step/100`` and, if that
    also fails, flagged False in ``ok``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    G, ok = _central(e, P, step)
    if not ok.all():
        bad = ~ok
        h = step * 1e-2
        g1, ok1 = _central(e, P[bad], h)
        g2, ok2 = _central(e, P[bad], h / 2)
        with np.errstate(invalid="ignore"):
            rich = (4.0 * g2 - g1) / 3.0
        fixed = ok1 & ok2
        G[np.flatnonzero(bad)[fixed]] = rich[fixed]
        ok[np.flatnonzero(bad)[fixed]] = True
    return G, ok


def grad_fd(e: Expr, p, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of ``e`` at ``p``."""
    G, ok = grad_fd_batch(e, np.asarray(p, dtype=float)[None, :], step)
    if not ok[0]:
        raise FDGradientError(f"infinite value in finite-difference stencil at {list(p)}")
    return G[0]


def deriv_exact(e: Expr, index: int) -> Expr:
    """Symbolic partial derivative with respect to ``x<index+1>``."""
    memo = {}

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Constant):
            out = ZERO
        elif isinstance(node, Var):
            out = ONE if node.index == index else ZERO
        elif isinstance(node, Sum):
            out = linear_combination([(c, go(ch)) for c, ch in node.terms])
        elif isinstance(node, Product):
            out = add(mul(go(node.left), node.right), mul(node.left, go(node.right)))
        elif isinstance(node, Power):
            du = go(node.child)
            out = mul(scale(node.exponent, power(node.child, node.exponent - 1)), du)
        elif isinstance(node, Apply):
            u = node.child
            du = go(u)
            if isinstance(du, Constant) and du.value == 0.0:
                out = ZERO
            else:
                f = node.func
                if f is UnivariateFunc.COS:
                    outer = scale(-1.0, Apply(UnivariateFunc.SIN, u))
                elif f is UnivariateFunc.SIN:
                    outer = Apply(UnivariateFunc.COS, u)
                elif f is UnivariateFunc.EXP:
                    outer = node
                elif f is UnivariateFunc.LOG:
                    outer = Apply(UnivariateFunc.RECIP, u)
                elif f is UnivariateFunc.SQRT:
                    outer = scale(0.5, Apply(UnivariateFunc.RECIP, node))
                elif f is UnivariateFunc.ABS:
                    outer = Apply(UnivariateFunc.SIGN, u)
                elif f is UnivariateFunc.RECIP:
                    outer = scale(-1.0, Power(node, 2))
                elif f is UnivariateFunc.SIGN:
                    outer = ZERO
                else:
                    raise TypeError(f)
                out = mul(outer, du)
        elif isinstance(node, (PointwiseMin, PointwiseMax)):
            raise MinMaxNotDifferentiable("min/max nodes have no symbolic derivative")
        else:
            raise TypeError(f"unknown node {node!r}")
        memo[key] = out
        return out

    return go(e)


def gradient_exact(e: Expr, n: int):
    return [deriv_exact(e, j) for j in range(n)]


# ---------------------------------------------------------------------------
# quadratic recognition


def as_quadratic(e: Expr, n: int):
    """Return ``(c0, g, H)`` with e(x) = c0 + g.x + x.H.x/2, or None.

    Succeeds exactly when ``e`` is a polynomial of total degree <= 2 built from
    constants, variables, sums, products and powers.
    """
    memo = {}

    def mul_poly(a, b):
        out = {}
        for ka, va in a.items():
            for kb, vb in b.items():
                k = tuple(sorted(ka + kb))
                if len(k) > 2:
                    return None
                out[k] = out.get(k, 0.0) + va * vb
        return out

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        out = None
        if isinstance(node, Constant):
            out = {(): node.value}
        elif isinstance(node, Var):
            out = {(node.index,): 1.0}
        elif isinstance(node, Sum):
            out = {}
            for c, ch in node.terms:
                p = go(ch)
                if p is None:
                    out = None
                    break
                for k, v in p.items():
                    out[k] = out.get(k, 0.0) + c * v
        elif isinstance(node, Product):
            a, b = go(node.left), go(node.right)
            if a is not None and b is not None:
                out = mul_poly(a, b)
        elif isinstance(node, Power):
            a = go(node.child)
            if a is not None:
                out = {(): 1.0}
                for _ in range(node.exponent):
                    out = mul_poly(out, a)
                    if out is None:
                        break
        memo[key] = out
        return out

    poly = go(e)
    if poly is None:
        return None
    c0 = poly.get((), 0.0)
    g = np.zeros(n)
    H = np.zeros((n, n))
    for k, v in poly.items():
        if len(k) == 1:
            g[k[0]] += v
        elif len(k) == 2:
            i, j = k
            if i == j:
                H[i, i] += 2.0 * v
            else:
                H[i, j] += v
                H[j, i] += v
    return c0, g, H
