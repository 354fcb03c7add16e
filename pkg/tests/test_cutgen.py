import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intercuts import expr as ex
from intercuts.cutgen import Cut, RaySystem, cut_from_steps, intersection_cut, ray_step, step_length
from intercuts.errors import AllRaysUnbounded, ApexNotInterior
from intercuts.estimators import estimate

from corpus import INT_QUAD, TOY


def test_toy_cut_is_x_geq_1():
    # [PAPER] {x in [0,2] : -x^2 + 1 <= 0}, separating 0 gives x >= 1
    h = estimate(ex.parse(TOY, 1), [0.0]).under
    cut = intersection_cut(h, RaySystem.axis([0.0]))
    assert abs(cut.coeffs[0] - 1.0) <= 1e-9
    assert cut.rhs == 1.0


def test_quadratic_intersection_cut():
    # [PAPER] sqrt(5/2) x1 + 1/(2 sqrt 2) x2 >= 1
    h = estimate(ex.parse(INT_QUAD, 2), [0.0, 0.0]).under
    cut = intersection_cut(h, RaySystem.axis([0.0, 0.0]))
    np.testing.assert_allclose(cut.coeffs, [math.sqrt(2.5), 1 / (2 * math.sqrt(2))], atol=1e-6)


def test_step_is_on_nonnegative_side():
    h = ex.parse("2 - x1^2", 1)
    lam = step_length(h, [1.0])
    assert ex.evaluate(h, [lam]) >= 0
    assert lam == pytest.approx(math.sqrt(2), abs=1e-8)


def test_constant_positive_has_no_crossing():
    h = ex.parse("1", 1)
    assert step_length(h, [1.0]) == math.inf
    with pytest.raises(AllRaysUnbounded):
        intersection_cut(h, RaySystem.axis([0.0]))


def test_infinite_step_gives_zero_coefficient():
    cut = cut_from_steps([2.0, math.inf], "ic")
    np.testing.assert_array_equal(cut.coeffs, [0.5, 0.0])


def test_apex_must_be_interior():
    with pytest.raises(ApexNotInterior):
        step_length(ex.parse("x1 - 1", 1), [1.0])


def test_general_rays_and_apex():
    # disc of radius 2 around (1, 1): steps along any unit ray are 2
    h = ex.parse("4 - (x1 - 1)^2 - (x2 - 1)^2", 2)
    rays = RaySystem([1.0, 1.0], [[0.6, 0.8], [-1.0, 0.0]])
    cut = intersection_cut(h, rays)
    np.testing.assert_allclose(cut.provenance["steps"], [2.0, 2.0], atol=1e-8)


@given(st.floats(0.1, 10.0), st.floats(1e2, 1e6))
@settings(max_examples=30, deadline=None)
def test_shrinking_lambda_max_never_increases_finite_steps(r, lam_max):
    h = ex.parse(f"{r * r!r} - x1^2", 1)
    big = ray_step(lambda p: ex.evaluate(h, p), [0.0], [1.0], 1e9)
    small = ray_step(lambda p: ex.evaluate(h, p), [0.0], [1.0], lam_max)
    assert small == math.inf or small <= big
    # stopping rule is on the residual: 0 <= h(step) <= 1e-9 max(1, |h(0)|)
    assert 0.0 <= ex.evaluate(h, [big]) <= 1e-9 * max(1.0, r * r)


def test_cut_json_round_trip():
    cut = cut_from_steps([1.0, 4.0], "ic", instance="t", tolerances={"residual": 1e-9})
    back = Cut.from_json(cut.to_json())
    np.testing.assert_array_equal(back.coeffs, cut.coeffs)
    assert back.provenance["method"] == "ic" and back.provenance["instance"] == "t"
    assert cut.to_json()["tolerances"] == {"residual": 1e-9}
