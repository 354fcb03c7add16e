import json
import math

import numpy as np
import pytest

from intercuts.lp import Instance
from intercuts.pipeline import (EXIT_CUT_FAILED, EXIT_LP, EXIT_NOT_VIOLATED, EXIT_OK, PipelineOptions,
                                run_pipeline)

CORPUS_FILES = ["toy", "int_quadratic", "slack", "bilinear", "logsum"]


def load(data_dir, name):
    return Instance.load(data_dir / f"{name}.json")


def test_toy_pipeline_emits_x_geq_1(data_dir):
    rep = run_pipeline(load(data_dir, "toy"))
    assert rep.exit_code == EXIT_OK
    (cut,) = rep.cuts
    assert cut["original"]["coeffs"] == [1.0] and cut["original"]["rhs"] == 1.0
    assert cut["verdict"]["valid"]


def test_int_quadratic_monoidal(data_dir):
    rep = run_pipeline(load(data_dir, "int_quadratic"), PipelineOptions(monoidal=True, k=(0,)))
    by_method = {c["method"]: c["original"]["coeffs"] for c in rep.cuts}
    np.testing.assert_allclose(by_method["ic"], [math.sqrt(2.5), 1 / (2 * math.sqrt(2))], atol=1e-6)
    np.testing.assert_allclose(by_method["ic+monoidal"], [1.0, 1 / (2 * math.sqrt(2))], atol=1e-3)


def test_exit_codes(data_dir):
    assert run_pipeline(load(data_dir, "feasible")).exit_code == EXIT_NOT_VIOLATED
    assert run_pipeline(load(data_dir, "infeasible")).exit_code == EXIT_LP


def test_cut_failure_is_reported():
    # sqrt at 0 has no tangent, so there is no estimator at the vertex
    inst = Instance.from_dict({"n": 1, "c": [-1], "ub": [2], "nlcons": ["1 - sqrt(x1)"]})
    rep = run_pipeline(inst)
    assert rep.exit_code == EXIT_CUT_FAILED
    assert rep.failures and rep.failures[0]["error"] == "AtomUndefined"


def test_monoidal_on_non_integer_variable_is_a_failure_entry(data_dir):
    rep = run_pipeline(load(data_dir, "int_quadratic"), PipelineOptions(monoidal=True, k=(1,)))
    assert rep.exit_code == EXIT_OK
    assert any(f["method"] == "ic+monoidal" for f in rep.failures)


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_every_emitted_cut_is_valid(data_dir, name):
    rep = run_pipeline(load(data_dir, name), PipelineOptions(bounds=True, monoidal=True, tuy=True))
    assert rep.exit_code == EXIT_OK
    assert not rep.rejected
    assert all(c["verdict"]["valid"] for c in rep.cuts)
    # the cut separates the LP vertex
    x = np.array(rep.x_hat)
    for c in rep.cuts:
        assert np.dot(c["original"]["coeffs"], x) < c["original"]["rhs"]


def test_report_is_deterministic(data_dir):
    inst = load(data_dir, "bilinear")
    opt = PipelineOptions(bounds=True, monoidal=True)
    a = run_pipeline(inst, opt).to_json(timing=False)
    b = run_pipeline(inst, opt).to_json(timing=False)
    assert a == b
    assert "timing" not in json.loads(a)
    assert "timing" in json.loads(run_pipeline(inst, opt).to_json())
