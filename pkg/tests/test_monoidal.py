import math

import numpy as np
import pytest

from intercuts import expr as ex
from intercuts.cutgen import RaySystem, intersection_cut
from intercuts.errors import ApexNotInterior, EmptyBoundary, InvalidConfig
from intercuts.monoidal import (MonoidalConfig, alpha_coeffs, beta, beta_value, gamma_coeff, monoidal_cut,
                                sweep_boundary)
from intercuts.strengthen import Box
from intercuts.validate import feasible_mesh, validate_cut
from intercuts.lp import Instance

from corpus import INT_QUAD

BOX2 = Box([0.0, 0.0], [2.0, 5.0])


@pytest.fixture(scope="module")
def iq():
    h = ex.parse(INT_QUAD, 2)
    cfg = MonoidalConfig(K=(0,), directions=2000)
    return h, cfg, sweep_boundary(h, BOX2, cfg)


def brute_force_gamma(count=100_000):
    """[DERIVED] gamma_1 of the reference quadratic from an analytic discretisation of Y."""
    th = np.linspace(0, math.pi / 2, count)
    d = np.column_stack([np.cos(th), np.sin(th)])
    q = -10 * d[:, 0] ** 2 - 0.5 * d[:, 1] ** 2 + 2 * d[:, 0] * d[:, 1]
    neg = q < 0
    lam = np.sqrt(-4 / q[neg])
    Y = lam[:, None] * d[neg]
    Y = Y[(Y[:, 0] <= 2) & (Y[:, 1] <= 5)]
    G = np.column_stack([-20 * Y[:, 0] + 2 * Y[:, 1], -Y[:, 1] + 2 * Y[:, 0]])
    inner = np.einsum("ij,ij->i", G, Y)  # = -8 on Y
    top = (np.maximum(G, 0) * np.array([2.0, 5.0])).sum(axis=1)
    B = top / inner
    ratio = G / inner[:, None]
    keep = B < 1
    alpha = ratio[keep].max(axis=0)
    return min(alpha[0], float((ratio[keep, 0] + 1 - B[keep]).min())), alpha


def test_boundary_invariants(iq):
    h, _, s = iq
    assert np.all(np.abs(ex.evaluate(h, s.points)) <= 1e-8)
    assert np.all(s.inner <= -s.h0 + 1e-6)
    assert np.all(BOX2.contains(s.points, tol=1e-12))


def test_sweep_hits_axis_point(iq):
    # [DERIVED] along e2: -1/2 y^2 + 4 = 0 at y = 2 sqrt 2
    _, _, s = iq
    on_axis = s.points[np.abs(s.points[:, 0]) < 1e-15]
    assert on_axis.shape[0] >= 1
    assert on_axis[0, 1] == pytest.approx(2 * math.sqrt(2), abs=1e-8)


def test_beta_at_reference_point():
    # [PAPER] beta(1/sqrt10, sqrt10) = 0
    y = np.array([1 / math.sqrt(10), math.sqrt(10)])
    g = np.array([-20 * y[0] + 2 * y[1], -y[1] + 2 * y[0]])
    assert abs(g[0]) < 1e-14
    b = beta((y, g, float(g @ y)), BOX2)
    assert abs(b) <= 1e-6
    assert float(g @ y) == pytest.approx(-8.0)


def test_beta_cases():
    assert beta_value([-1.0, -2.0], -3.0, [1.0, 1.0]) == 0.0
    assert beta_value([1.0, -2.0], -3.0, [math.inf, 1.0]) == -math.inf
    assert beta_value([1.0, 0.0], -2.0, [3.0, 1.0]) == -1.5


def test_alpha_equals_ic(iq):
    # [PAPER] alpha = (sqrt(5/2), 1/(2 sqrt 2)); gauge consistency with the ray steps
    h, cfg, s = iq
    alpha = alpha_coeffs(s)
    np.testing.assert_allclose(alpha, [math.sqrt(2.5), 1 / (2 * math.sqrt(2))], atol=1e-4)
    steps = intersection_cut(h, RaySystem.axis([0.0, 0.0])).provenance["steps"]
    np.testing.assert_allclose(alpha * np.array(steps), 1.0, atol=1e-4)


def test_gamma_against_brute_force(iq):
    _, _, s = iq
    oracle, oracle_alpha = brute_force_gamma()
    assert oracle == pytest.approx(1.0, abs=1e-4)
    assert gamma_coeff(s, 0) == pytest.approx(oracle, abs=1e-3)
    assert gamma_coeff(s, 0) <= alpha_coeffs(s)[0] + 1e-12


def test_monoidal_cut_and_validity(iq):
    # [PAPER] x1 + 1/(2 sqrt 2) x2 >= 1, valid on {0,1,2} x [0,5]
    h, cfg, s = iq
    (cut,) = monoidal_cut(h, BOX2, cfg, sample=s)
    np.testing.assert_allclose(cut.coeffs, [1.0, 1 / (2 * math.sqrt(2))], atol=1e-3)
    inst = Instance(2, np.zeros(2), np.zeros((0, 2)), np.zeros(0), BOX2, frozenset({0}), (h,))
    X, _, _, _ = feasible_mesh(inst, 0.01)
    assert np.all(cut.activity(X) >= 1 - 1e-7)
    assert validate_cut(cut, inst, 0.01, tableau=None).valid
    assert cut.provenance["method"] == "ic+monoidal"


def test_one_dimensional():
    h = ex.parse("1 - x1^2", 1)
    s = sweep_boundary(h, Box([0.0], [2.0]), MonoidalConfig(K=(0,)))
    np.testing.assert_allclose(s.points, 1.0, atol=1e-8)
    assert alpha_coeffs(s)[0] == pytest.approx(1.0, abs=1e-6)


def test_symmetric_function_has_equal_alphas():
    h = ex.parse("1 - x1^2 - x2^2 - x1*x2", 2)
    s = sweep_boundary(h, Box([0.0, 0.0], [3.0, 3.0]), MonoidalConfig(K=(0,)))
    a = alpha_coeffs(s)
    assert a[0] == pytest.approx(a[1], abs=1e-6)


def test_alpha_upper_bound():
    h = ex.parse(INT_QUAD, 2)
    s = sweep_boundary(h, BOX2, MonoidalConfig())
    a = alpha_coeffs(s)
    h0 = ex.evaluate(h, [0.0, 0.0])
    for j, e in enumerate(np.eye(2)):
        he = ex.evaluate(h, e)
        bound = 1.0 if he >= 0 else 1 - he / h0
        assert a[j] <= bound + 1e-6


def test_more_directions_is_monotone():
    h = ex.parse(INT_QUAD, 2)
    s1 = sweep_boundary(h, BOX2, MonoidalConfig(directions=500))
    s2 = sweep_boundary(h, BOX2, MonoidalConfig(directions=1000))
    assert np.all(alpha_coeffs(s2) >= alpha_coeffs(s1) - 1e-6)
    assert gamma_coeff(s2, 0) <= gamma_coeff(s1, 0) + 1e-6


def test_per_k_and_sos1_cuts():
    h = ex.parse("3 - x1^2 - x2^2 - x1*x2", 2)
    box = Box([0.0, 0.0], [2.0, 2.0])
    cuts = monoidal_cut(h, box, MonoidalConfig(K=(0, 1)))
    assert len(cuts) == 2
    assert cuts[0].provenance["strengthened"] == [0] and cuts[1].provenance["strengthened"] == [1]
    (joint,) = monoidal_cut(h, box, MonoidalConfig(K=(0, 1), sos1=True))
    np.testing.assert_allclose(joint.coeffs, [cuts[0].coeffs[0], cuts[1].coeffs[1]], atol=1e-9)


def test_unbounded_coordinate_makes_terms_unusable():
    # with u1 = inf every y with d1 h(y) > 0 has beta = -inf; no strengthening beyond alpha
    h = ex.parse(INT_QUAD, 2)
    box = Box([0.0, 0.0], [math.inf, 5.0])
    s = sweep_boundary(h, box, MonoidalConfig())
    assert np.any(~s.usable)
    a = alpha_coeffs(s)
    assert gamma_coeff(s, 0) <= a[0] + 1e-12


def test_errors():
    h = ex.parse(INT_QUAD, 2)
    with pytest.raises(InvalidConfig):
        monoidal_cut(h, BOX2, MonoidalConfig(K=()))
    with pytest.raises(InvalidConfig):
        sweep_boundary(h, Box([1.0, 0.0], [2.0, 5.0]), MonoidalConfig())
    with pytest.raises(ApexNotInterior):
        sweep_boundary(ex.parse("x1 - 1", 1), Box([0.0], [2.0]), MonoidalConfig())
    with pytest.raises(EmptyBoundary):
        sweep_boundary(ex.parse("5 - x1", 1), Box([0.0], [2.0]), MonoidalConfig())
