import numpy as np
import pytest

from intercuts import expr as ex
from intercuts.cutgen import RaySystem, intersection_cut
from intercuts.errors import ApexNotInterior, EmptyZRegion, UnsupportedDimension
from intercuts.estimators import estimate
from intercuts.strengthen import Box, build_hhat, hhat_eval, strengthened_cut

from corpus import BOX_QUAD, TOY

# [DERIVED] boundary steps of the true hhat along e1, e2 from (1,1) on [0,2]^2,
# computed offline by multistart SLSQP on the inner minimisation
ORACLE_OURS = (12.971376, 1.4507462)
ORACLE_TUY = (9.0, 1.4494897)


@pytest.fixture(scope="module")
def bq():
    h = ex.parse(BOX_QUAD, 2)
    h_ave = estimate(h, [1.0, 1.0]).under
    box = Box([0.0, 0.0], [2.0, 2.0])
    rays = RaySystem.axis([1.0, 1.0])
    ev = build_hhat(h_ave, box, base_point=[1.0, 1.0])
    ev_tuy = build_hhat(h_ave, box, base_point=[1.0, 1.0], tuy=True)
    return {
        "h": h, "h_ave": h_ave, "box": box, "ev": ev, "ev_tuy": ev_tuy,
        "ic": intersection_cut(h_ave, rays),
        "ours": strengthened_cut(ev, rays),
        "tuy": strengthened_cut(ev_tuy, rays),
    }


def test_hhat_dominates_h_ave(bq):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 5, (2000, 2))
    assert np.all(hhat_eval(bq["ev"], X) >= ex.evaluate(bq["h_ave"], X) - 1e-9)


def test_sampled_s_freeness(bq):
    axis = np.linspace(0, 2, 201)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    X = np.column_stack([gx.ravel(), gy.ravel()])
    feas = ex.evaluate(bq["h"], X) <= 0
    assert feas.any()
    assert np.all(hhat_eval(bq["ev"], X[feas]) <= 1e-6)


def test_steps_against_slsqp_oracle(bq):
    # sampling can only overestimate hhat, so steps may be at most slightly long
    ours = bq["ours"].provenance["steps"]
    tuy = bq["tuy"].provenance["steps"]
    for got, want in zip(ours, ORACLE_OURS):
        assert got == pytest.approx(want, rel=2e-3)
    for got, want in zip(tuy, ORACLE_TUY):
        assert got == pytest.approx(want, rel=2e-3)


def test_dominance_over_plain_and_tuy(bq):
    ours, ic, tuy = bq["ours"].coeffs, bq["ic"].coeffs, bq["tuy"].coeffs
    assert np.all(ours <= ic + 1e-6)
    assert np.all(tuy >= ours - 1e-6)
    assert ours[0] < 0.5 * ic[0]  # the improvement along e1 is large


def test_provenance_records_tolerances(bq):
    prov = bq["ours"].provenance
    assert prov["method"] == "ic+bounds"
    assert prov["tolerances"]["safety"] == 1e-6
    assert prov["tuy"] is False and bq["tuy"].provenance["tuy"] is True


def test_unbounded_box_falls_back_with_warning():
    h_ave = estimate(ex.parse(TOY, 1), [0.0]).under
    with pytest.warns(RuntimeWarning, match="unbounded"):
        ev = build_hhat(h_ave, Box.unbounded(1), base_point=[0.0])
    cut = strengthened_cut(ev, RaySystem.axis([0.0]))
    plain = intersection_cut(h_ave, RaySystem.axis([0.0]))
    np.testing.assert_allclose(cut.coeffs, plain.coeffs, atol=1e-5)


def test_toy_is_not_improved_by_bounds():
    # [DERIVED] -x^2+1 is concave, its linearisations at z in {h>=0} never exceed it beyond x=1
    h_ave = estimate(ex.parse(TOY, 1), [0.0]).under
    ev = build_hhat(h_ave, Box([0.0], [2.0]), base_point=[0.0])
    cut = strengthened_cut(ev, RaySystem.axis([0.0]))
    assert cut.coeffs[0] == pytest.approx(1.0, abs=2e-6)
    assert cut.coeffs[0] >= 1.0  # safety shrink only weakens


def test_errors():
    h = ex.parse("x1 + x2 + x3 + x4 + x5", 5)
    with pytest.raises(UnsupportedDimension):
        build_hhat(h, Box(np.zeros(5), np.ones(5)))
    with pytest.raises(EmptyZRegion):
        build_hhat(ex.parse("-1 - x1^2", 1), Box([0.0], [1.0]))
    ev = build_hhat(ex.parse("1 - x1", 1), Box([0.0], [2.0]))
    with pytest.raises(ApexNotInterior):
        strengthened_cut(ev, RaySystem.axis([1.5]))


def test_hhat_point_and_batch_agree(bq):
    X = np.array([[0.5, 0.5], [1.5, 1.9]])
    batch = hhat_eval(bq["ev"], X)
    assert batch[0] == hhat_eval(bq["ev"], X[0])
    assert isinstance(hhat_eval(bq["ev"], X[1]), float)
