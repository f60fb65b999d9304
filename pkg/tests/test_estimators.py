import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from plantcap.data import BasicCounts, ClassedCounts, IdCounts, snight_dataset, write_survey
from plantcap.estimators import (
    ChapmanBaileyEstimator,
    PlantCaptureBayes,
    PlantCaptureBNA,
    PlantCaptureMLE,
    check_survey,
)
from plantcap.exceptions import ValidationError

NEW_ORLEANS = {"m_i": 41, "m_yes": 6, "m_mb": 5, "m_no": 6, "y": 109}


def test_params_round_trip():
    est = PlantCaptureBayes(chains=2, iterations=800, burn_in=400, random_state=3)
    assert est.get_params()["iterations"] == 800
    est.set_params(thin=2)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert "PlantCaptureBayes" in repr(est)


def test_check_survey_inputs(tmp_path):
    want = IdCounts(**NEW_ORLEANS)
    assert check_survey(NEW_ORLEANS) == want
    assert check_survey(np.array([41, 6, 5, 6, 109])) == want
    assert check_survey([[41, 6, 5, 6, 109]]) == want
    path = tmp_path / "no.csv"
    write_survey(want, path)
    assert check_survey(str(path)) == want
    assert check_survey([6, 5, 6, 50], model="basic") == BasicCounts(6, 5, 6, 50)
    assert check_survey(IdCounts(0, 6, 5, 6, 50), model="basic") == BasicCounts(6, 5, 6, 50)
    with pytest.raises(ValidationError):
        check_survey(want, model="basic")
    classed = check_survey({"easy": NEW_ORLEANS, "hard": {"m_yes": 2, "m_mb": 1, "m_no": 2, "y": 30}},
                           model="class")
    assert isinstance(classed, ClassedCounts) and list(classed.labels) == ["easy", "hard"]
    assert check_survey(np.array([[41, 6, 5, 6, 109], [0, 2, 1, 2, 30]]), model="class").K == 2


@pytest.mark.parametrize("bad", [
    [1.5, 2, 3, 4],
    [1, 2, 3],
    [np.nan, 1, 2, 3],
    {"m_yes": -1, "m_mb": 0, "m_no": 0, "y": 3},
])
def test_check_survey_rejects(bad):
    with pytest.raises((ValidationError, ValueError)):
        check_survey(bad, model="basic")


def test_multi_class_for_single_model():
    with pytest.raises(ValidationError):
        check_survey(np.array([[41, 6, 5, 6, 109], [0, 2, 1, 2, 30]]), model="id")


def test_mle_estimator():
    est = PlantCaptureMLE().fit(NEW_ORLEANS)
    assert round(est.estimate_) == 68 and est.estimate_floor_ == 68
    assert est.score(NEW_ORLEANS) == pytest.approx(est.loglik_)
    assert est.labels_ == ["all"] and est.n_classes_ == 1
    rows = est.summary()
    assert [r["parameter"] for r in rows][0] == "H"


def test_closed_form_estimator():
    est = PlantCaptureMLE(model="basic", closed_form=True).fit([6, 5, 6, 50])
    assert est.estimate_floor_ == 83 and est.params_["p_c"] == 0.5
    with pytest.raises(ValueError):
        PlantCaptureMLE(model="id", closed_form=True).fit(NEW_ORLEANS)


def test_class_estimator_score_checks_labels():
    data = {"easy": {"m_i": 12, "m_yes": 4, "m_mb": 2, "m_no": 2, "y": 180},
            "hard": {"m_i": 4, "m_yes": 1, "m_mb": 2, "m_no": 5, "y": 50}}
    est = PlantCaptureMLE(model="class").fit(data)
    assert est.n_classes_ == 2
    assert np.isfinite(est.score(data))
    with pytest.raises(ValidationError):
        est.score({"a": data["easy"], "b": data["hard"]})


def test_bna_estimator():
    est = PlantCaptureBNA().fit(NEW_ORLEANS)
    assert 60 < est.estimate_ < 80 and np.isfinite(est.log_posterior_)


def test_bayes_estimator():
    est = PlantCaptureBayes(chains=2, iterations=2000, burn_in=1000, random_state=1).fit(NEW_ORLEANS)
    assert 55 < est.estimate_ < 95
    assert set(est.rhat_) == set(est.ess_)
    assert {r["parameter"] for r in est.summary()} >= {"H", "p_c"}
    up = PlantCaptureBayes(chains=2, iterations=2000, burn_in=1000, random_state=1,
                           uncertainty_propagation=True).fit(NEW_ORLEANS)
    assert up.estimate0_ > 0


def test_chapman_bailey_estimator():
    d = snight_dataset()["Phoenix"]
    assert ChapmanBaileyEstimator().fit(d).estimate_ == 96
    assert ChapmanBaileyEstimator("maybe-as-not-seen").fit(d).estimate_ == 102


@pytest.mark.parametrize("est", [PlantCaptureMLE(), PlantCaptureBNA(), PlantCaptureBayes()])
def test_not_fitted(est):
    with pytest.raises(NotFittedError):
        est.summary()
