import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plantcap import simulation as sim
from plantcap.data import validate
from plantcap.exceptions import AllReplicatesFailed, UnknownPreset
from plantcap.likelihood import BasicParams, ClassParams, IdParams
from plantcap.mcmc import McmcConfig
from plantcap.simulation import (
    SimScenario,
    allocate,
    generate,
    load_scenarios,
    metrics,
    preset_scenarios,
    run_study,
)


def test_metric_hand_example():
    row = metrics("H", 150, [140, 150, 160], [10, 10, 10], [(100, 200)] * 3)
    assert row.rbias == 0 and row.cp == 1.0 and row.lci == 100 and row.sd == 10
    assert row.rrmse == pytest.approx(math.sqrt(200 / 3) / 150)
    assert round(row.rrmse, 3) == 0.054


@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=40), st.floats(1, 1e4))
def test_rrmse_identity(est, truth):
    row = metrics("H", truth, est, [0.0] * len(est), [(0.0, 1.0)] * len(est))
    assert row.rrmse ** 2 == pytest.approx(row.rbias ** 2 + (row.emp_sd / truth) ** 2, rel=1e-9, abs=1e-12)
    assert row.rrmse >= abs(row.rbias) - 1e-12
    assert 0.0 <= row.cp <= 1.0


def test_allocate():
    assert allocate(15, (0.6, 0.4)) == [9, 6]
    assert allocate(5, (0.5, 0.5)) == [3, 2]
    assert allocate(1500, (0.6, 0.4)) == [900, 600]


@given(st.integers(0, 10_000), st.lists(st.floats(0.01, 10), min_size=1, max_size=6))
def test_allocate_sums(total, weights):
    parts = allocate(total, weights)
    assert sum(parts) == total
    exact = np.asarray(weights) / sum(weights) * total
    assert np.all(np.abs(np.asarray(parts) - exact) < 1)


def test_perfect_capture_is_deterministic():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = generate("basic", BasicParams(150, 1.0, 0.0), 15, rng)
        assert (d.m_yes, d.m_mb, d.m_no, d.y) == (15, 0, 0, 165)


def test_expected_census():
    rng = np.random.default_rng(1)
    y = np.array([generate("basic", BasicParams(1500, 0.7, 0.2), 100, rng).y for _ in range(10_000)])
    assert abs(y.mean() - 1120) < 3 * y.std(ddof=1) / math.sqrt(y.size)


def test_class_pooled_capture():
    sc = preset_scenarios("table3", M=100)[0]
    truth = sc.truth_params()
    assert list(truth.h_k) == [900, 600]
    rng = np.random.default_rng(2)
    totals = []
    for _ in range(4000):
        d = generate("class", truth, 100, rng, weights=sc.weights, labels=sc.labels)
        assert [c.m_total for c in d.counts] == [60, 40]
        totals.append(sum(c.y for c in d.counts))
    totals = np.array(totals)
    # E[total census] = 0.9 (900 + 60) + 0.4 (600 + 40) = 0.7 (1500 + 100)
    assert abs(totals.mean() / 1600 - 0.7) < 3 * totals.std(ddof=1) / math.sqrt(totals.size) / 1600


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
       st.integers(0, 300), st.integers(0, 60))
def test_generated_data_validates(seed, pc, pmb, pic, H, M):
    rng = np.random.default_rng(seed)
    validate(generate("basic", BasicParams(H, pc, pmb), M, rng))
    d = validate(generate("id", IdParams(H, pc, pic, pmb), M, rng))
    assert d.h_i <= d.y - d.m_i - d.m_yes
    validate(generate("class", ClassParams([H, H // 2], [pc, 1 - pc], pic, pmb), M, rng,
                      weights=(0.6, 0.4)))


def _small(method="mle", **kw):
    base = dict(model="id", truth={"H": 150, "p_c": 0.7, "p_mb_ni": 0.2, "p_i_c": 0.8},
                M=30, replicates=12, method=method, seed=4,
                mcmc=McmcConfig(chains=2, iterations=600, burn_in=300))
    base.update(kw)
    return SimScenario(**base)


def test_study_is_deterministic_across_jobs():
    a = run_study(_small(), jobs=1)
    b = run_study(_small(), jobs=2)
    assert a.rows == b.rows and a.failure_codes == b.failure_codes
    assert a.to_delimited() == b.to_delimited()


def test_bayes_study_independent_of_chunking(monkeypatch):
    sc = _small("bayes", replicates=3)
    a = run_study(sc)
    monkeypatch.setattr(sim, "BAYES_CHUNK", 1)
    b = run_study(sc)
    assert a.rows == b.rows


def test_up_study_reports_plugin_size():
    rep = run_study(_small("up", replicates=2))
    assert [r.parameter for r in rep.rows][:2] == ["H", "H0"]


def test_single_replicate():
    rep = run_study(_small(replicates=1))
    for r in rep.rows:
        assert r.cp in (0.0, 1.0) and r.emp_sd == 0.0 and r.n == 1


def test_failures_counted_and_all_failed():
    sc = SimScenario(model="basic", truth={"H": 150, "p_c": 0.0, "p_mb": 0.2}, M=15, replicates=3)
    with pytest.raises(AllReplicatesFailed):
        run_study(sc)
    rep = run_study(SimScenario(model="basic", truth={"H": 20, "p_c": 0.15, "p_mb": 0.2}, M=4,
                                replicates=30, seed=1))
    assert rep.failures > 0 and rep.failures == sum(rep.failure_codes.values())
    assert rep.row("H").n == 30 - rep.failures


def test_report_columns():
    rep = run_study(_small(replicates=3))
    lines = rep.to_delimited().splitlines()
    assert lines[0].split(",") == list(sim.SimReport.COLUMNS)
    assert len(lines) == 1 + 4
    assert json.loads(json.dumps(rep.to_dict()))["rows"][0]["Parameter"] == "H"


def test_presets():
    names = [s.name for s in preset_scenarios("table1")]
    assert names == ["table1-mle-M15", "table1-mle-M100"]
    (sc,) = preset_scenarios("table3", "mcmc", M="small")
    assert sc.M == 30 and sc.truth["H"] == 300 and sc.method == "bayes"
    with pytest.raises(UnknownPreset):
        preset_scenarios("table9")
    with pytest.raises(UnknownPreset):
        preset_scenarios("table1", M=50)


def test_invalid_scenarios():
    with pytest.raises(ValueError):
        _small(replicates=0)
    with pytest.raises(ValueError):
        _small(method="up", model="basic", truth={"H": 1, "p_c": 0.5, "p_mb": 0.1})
    with pytest.raises(ValueError):
        _small(truth={"H": 150, "p_c": 1.5, "p_mb_ni": 0.2, "p_i_c": 0.8})


def test_scenario_file(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps({
        "defaults": {"replicates": 20, "seed": 3},
        "scenarios": [
            {"preset": "table2", "M": 100, "method": "bna"},
            {"model": "basic", "truth": {"H": 80, "p_c": 0.6, "p_mb": 0.1}, "M": 20,
             "mcmc": {"chains": 2, "iterations": 500, "burn_in": 100}},
        ],
    }))
    a, b = load_scenarios(path)
    assert a.method == "bna" and a.M == 100 and a.replicates == 20 and a.seed == 3
    assert b.model == "basic" and b.mcmc.iterations == 500
    single = tmp_path / "one.json"
    single.write_text(json.dumps({"preset": "table1", "M": "small"}))
    (c,) = load_scenarios(single)
    assert c.M == 15
