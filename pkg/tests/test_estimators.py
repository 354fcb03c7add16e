import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intercuts import expr as ex
from intercuts.errors import AtomUndefined
from intercuts.estimators import (EstimatorPair, estimate, estimate_text, rule_product, rule_square,
                                  univariate_atom)

from corpus import CORPUS, COMPOSED, INT_QUAD, BOX_QUAD, base_points, grid

TOL = 1e-9


def composed_closed_form(x):
    """The underestimator composed by hand, rule by rule."""
    inner = np.cos(x ** 2) - x ** 4 / 2 + x / 4
    return math.exp(-1) + math.exp(-1) * (1 + np.minimum(-inner ** 2, -(1 + x / 4) ** 2))


def test_composed_matches_hand_derivation():
    # [PAPER] the composed underestimator of exp(-(cos(x^2)+x/4)^2) at 0
    f = ex.parse(COMPOSED, 1)
    pair = estimate(f, [0.0])
    x = np.linspace(-2.5, 2.5, 501)
    np.testing.assert_allclose(ex.evaluate(pair.under, x[:, None]), composed_closed_form(x), rtol=0, atol=1e-12)
    assert pair.value_at_base == pytest.approx(math.exp(-1), abs=1e-15)


def test_inner_estimators_of_composed():
    # [PAPER] cos(x^2) - x^4/2 + x/4 <= cos(x^2) + x/4 <= 1 + x/4
    pair = estimate_text("cos(x1^2) + x1/4", [0.0])
    x = np.linspace(-2.5, 2.5, 101)[:, None]
    np.testing.assert_allclose(ex.evaluate(pair.under, x), np.cos(x[:, 0] ** 2) - x[:, 0] ** 4 / 2 + x[:, 0] / 4,
                               atol=1e-14)
    np.testing.assert_allclose(ex.evaluate(pair.over, x), 1 + x[:, 0] / 4, atol=1e-14)


def test_concave_quadratic_is_its_own_underestimator():
    f = ex.parse(INT_QUAD, 2)
    pair = estimate(f, [0.0, 0.0])
    P = base_points(2, 0, 5)
    np.testing.assert_allclose(ex.evaluate(pair.under, P), ex.evaluate(f, P), atol=1e-12)


def test_box_quadratic_underestimator():
    # [DERIVED] h - u = 2x^2 + 2xy + y^2 - 6x - 4y + 5, a PSD quadratic vanishing at (1,1),
    # so u = 3x + 6y - 2y^2 - (x-y)^2 - 4 is concave, below h and tight at (1,1)
    pair = estimate_text(BOX_QUAD, [1.0, 1.0])
    P = grid(2, 0, 4, 41)
    x, y = P[:, 0], P[:, 1]
    by_hand = 3 * x + 6 * y - 2 * y ** 2 - (x - y) ** 2 - 4
    np.testing.assert_allclose(ex.evaluate(pair.under, P), by_hand, atol=1e-12)
    assert ex.evaluate(pair.under, [1.0, 1.0]) == pytest.approx(3.0, abs=1e-14)


@pytest.mark.parametrize("func,v", [("exp", 0.3), ("log", 2.0), ("sqrt", 1.5), ("abs", -0.7), ("cos", 1.0),
                                    ("sin", -2.0), ("cos", 0.0), ("sin", -math.pi / 2)])
def test_atoms_sandwich(func, v):
    under, over = univariate_atom(func, v)
    z = np.linspace(v - 5, v + 5, 2001)[:, None]
    f = ex.evaluate(ex.apply(func, ex.Var(0)), z)
    with np.errstate(all="ignore"):
        u, o = ex.evaluate(under, z), ex.evaluate(over, z)
    assert np.all(u <= f + TOL) and np.all(f <= o + TOL)
    fv = ex.evaluate(ex.apply(func, ex.Var(0)), [v])
    assert ex.evaluate(under, [v]) == pytest.approx(fv, abs=1e-15)
    assert ex.evaluate(over, [v]) == pytest.approx(fv, abs=1e-15)


def test_cos_at_its_maximum_uses_constant_overestimator():
    _, over = univariate_atom("cos", 0.0)
    assert isinstance(over, ex.Constant) and over.value == 1.0


@pytest.mark.parametrize("func", ["log", "sqrt"])
def test_atom_undefined(func):
    with pytest.raises(AtomUndefined):
        univariate_atom(func, 0.0)


def test_rule_square_and_product_at_point():
    x = ex.Var(0)
    p = EstimatorPair(x, x, np.array([2.0]), 2.0)
    sq = rule_square(p)
    assert ex.evaluate(sq.under, [3.0]) == 2 * 2 * 3 - 4  # tangent of z^2 at 2
    pr = rule_product(p, p)
    z = np.linspace(-4, 4, 81)[:, None]
    assert np.all(ex.evaluate(pr.under, z) <= z[:, 0] ** 2 + 1e-12)


def _check_pair(f, pair, v, G, fG):
    sc = np.maximum(1.0, np.abs(fG))
    fv = ex.evaluate(f, v)
    assert abs(ex.evaluate(pair.under, v) - fv) <= TOL * max(1, abs(fv))
    assert abs(ex.evaluate(pair.over, v) - fv) <= TOL * max(1, abs(fv))
    with np.errstate(all="ignore"):
        u, o = ex.evaluate(pair.under, G), ex.evaluate(pair.over, G)
    assert np.all(u - fG <= TOL * sc)
    assert np.all(fG - o <= TOL * sc)


@pytest.mark.parametrize("text,n,lo,hi", CORPUS, ids=[c[0] for c in CORPUS])
def test_corpus_tightness_and_sandwich(text, n, lo, hi):
    f = ex.parse(text, n)
    G = grid(n, lo, hi)
    fG = ex.evaluate(f, G)
    for v in base_points(n, lo, hi):
        _check_pair(f, estimate(f, v), v, G, fG)


def _leq(a, b):
    """a <= b up to the relative tolerance, exact when either side is infinite."""
    finite = np.isfinite(a) & np.isfinite(b)
    slack = np.where(finite, TOL * np.maximum(1, np.abs(np.where(finite, b, 0.0))), 0.0)
    return a <= b + slack


@pytest.mark.parametrize("text,n,lo,hi", CORPUS, ids=[c[0] for c in CORPUS])
def test_corpus_midpoint_concavity(text, n, lo, hi):
    f = ex.parse(text, n)
    rng = np.random.default_rng(7)
    A, B = rng.uniform(lo, hi, (300, n)), rng.uniform(lo, hi, (300, n))
    M = (A + B) / 2
    for v in base_points(n, lo, hi, count=5):
        pair = estimate(f, v)
        with np.errstate(all="ignore"):
            ua, ub, um = (ex.evaluate(pair.under, X) for X in (A, B, M))
            oa, ob, om = (ex.evaluate(pair.over, X) for X in (A, B, M))
        lhs = np.where(np.isinf(ua) | np.isinf(ub), -np.inf, (ua + ub) / 2)
        assert np.all(_leq(lhs, um))
        rhs = np.where(np.isinf(oa) | np.isinf(ob), np.inf, (oa + ob) / 2)
        assert np.all(_leq(om, rhs))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_random_base_points_bilinear(a, b, c, d):
    f = ex.parse("x1*x2 + sin(x1 - x2)", 2)
    pair = estimate(f, [a, b])
    with np.errstate(all="ignore"):
        assert ex.evaluate(pair.under, [c, d]) <= ex.evaluate(f, [c, d]) + TOL
        assert ex.evaluate(pair.over, [c, d]) >= ex.evaluate(f, [c, d]) - TOL


def test_constant_function():
    pair = estimate_text("3", [0.5])
    assert ex.evaluate(pair.under, [7.0]) == ex.evaluate(pair.over, [7.0]) == 3.0
