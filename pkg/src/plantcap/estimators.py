"""scikit-learn style front end.

Each estimator takes a survey in ``fit`` (counts object, mapping, file path
or an integer array with one row per class) and exposes the results as
trailing-underscore attributes::

    >>> est = PlantCaptureMLE(model="id").fit({"m_i": 41, "m_yes": 6, "m_mb": 5, "m_no": 6, "y": 109})
    >>> round(est.estimate_)
    68
"""
from __future__ import annotations

import os
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bna import bna_fit
from .chapman import CbScenario, chapman_bailey
from .data import BasicCounts, ClassedCounts, IdCounts, as_classed, load_survey, validate
from .exceptions import ValidationError
from .likelihood import BasicParams, ClassParams, IdParams, loglik_basic, loglik_class, loglik_id
from .mcmc import McmcConfig, PriorSpec, sample_posterior, sample_posterior_up
from .mle import MODELS, mle_basic_closed, mle_numeric

__all__ = [
    "check_survey",
    "PlantCaptureMLE",
    "PlantCaptureBNA",
    "PlantCaptureBayes",
    "ChapmanBaileyEstimator",
]

BASIC_COLUMNS = ("m_yes", "m_mb", "m_no", "y")
ID_COLUMNS = ("m_i", "m_yes", "m_mb", "m_no", "y", "h_i")


def _from_mapping(record: Mapping, model: str):
    if model == "basic" and "m_i" not in record and "h_i" not in record:
        return BasicCounts(**{k: int(record[k]) for k in BASIC_COLUMNS})
    fields = {k: record[k] for k in ID_COLUMNS if k in record and record[k] is not None}
    fields.setdefault("m_i", 0)
    return IdCounts(**{k: int(v) for k, v in fields.items()})


def _from_array(X, model: str):
    arr = check_array(X, ensure_2d=False, dtype=None, ensure_all_finite=True)
    if arr.ndim == 1:
        arr = arr[None, :]
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValidationError("survey arrays must hold whole-number counts")
    arr = arr.astype(np.int64)
    width = arr.shape[1]
    rows = []
    for row in arr:
        if width == 4:
            c = BasicCounts(*map(int, row))
            rows.append(c if model == "basic" else c.to_id())
        elif width in (5, 6):
            rows.append(IdCounts(*map(int, row)))
        else:
            raise ValidationError(
                f"survey arrays need 4 columns {BASIC_COLUMNS} or 5-6 columns {ID_COLUMNS}, got {width}")
    if len(rows) == 1 and model != "class":
        return rows[0]
    return ClassedCounts(tuple((f"class{k + 1}", r) for k, r in enumerate(rows)))


def check_survey(X, model: str = "id"):
    """Turn ``X`` into validated counts suitable for ``model``.

    Accepted inputs: BasicCounts/IdCounts/ClassedCounts, a mapping of count
    fields, a mapping of label -> mapping (one entry per class), a path to a
    survey file, or an integer array-like with one row per class.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    if isinstance(X, (str, os.PathLike)):
        X = load_survey(X)
    if isinstance(X, Mapping):
        if X and all(isinstance(v, Mapping) for v in X.values()):
            X = ClassedCounts(tuple((str(k), _from_mapping(v, "id")) for k, v in X.items()))
        else:
            X = _from_mapping(X, model)
    elif not isinstance(X, (BasicCounts, IdCounts, ClassedCounts)):
        X = _from_array(X, model)
    X = validate(X)
    if model == "class":
        return as_classed(X)
    if isinstance(X, ClassedCounts):
        if X.K != 1:
            raise ValidationError(f"model {model!r} takes one survey unit, got {X.K} classes")
        X = X.counts[0]
    if model == "basic" and isinstance(X, IdCounts):
        X = X.to_basic()
    return X


class _SurveyEstimator(BaseEstimator):
    """Shared result attributes for point-estimate style fits."""

    def _store(self, fit, data):
        self.fit_ = fit
        self.params_ = dict(fit.params)
        self.sd_ = dict(fit.sds)
        self.interval_ = dict(fit.cis)
        self.boundary_ = dict(fit.boundary_flags)
        self.estimate_ = float(fit.params["H"])
        self.labels_ = list(as_classed(data).labels)
        self.n_classes_ = len(self.labels_)
        return self

    def summary(self) -> list[dict]:
        """One row per parameter: estimate, sd, lower, upper, boundary."""
        check_is_fitted(self, "params_")
        return [
            {"parameter": name, "estimate": self.params_[name], "sd": self.sd_[name],
             "lower": self.interval_[name][0], "upper": self.interval_[name][1],
             "boundary": self.boundary_.get(name, False)}
            for name in self.params_
        ]


class PlantCaptureMLE(_SurveyEstimator):
    """Maximum likelihood fit with Hessian-based SDs and Wald intervals.

    Parameters
    ----------
    model : {"basic", "id", "class"}
    closed_form : bool
        Use the closed-form estimates (basic model only) instead of
        numerical optimization.
    class_total : {"sum_endpoints", "log_wald"}
        Interval construction for the class-model total.
    """

    def __init__(self, model: str = "id", closed_form: bool = False, class_total: str = "sum_endpoints"):
        self.model = model
        self.closed_form = closed_form
        self.class_total = class_total

    def fit(self, X, y=None):
        data = check_survey(X, self.model)
        if self.closed_form:
            if self.model != "basic":
                raise ValueError("closed-form estimates exist only for the basic model")
            fit = mle_basic_closed(data)
        else:
            fit = mle_numeric(self.model, data, class_total=self.class_total)
        self.estimate_floor_ = fit.h_rounded
        self.loglik_ = fit.loglik
        return self._store(fit, data)

    def score(self, X, y=None) -> float:
        """Log-likelihood of ``X`` under the fitted parameters."""
        check_is_fitted(self, "params_")
        data = check_survey(X, self.model)
        p = self.params_
        if self.model == "basic":
            return loglik_basic(BasicParams(p["H"], p["p_c"], p["p_mb"]), data)
        if self.model == "id":
            return loglik_id(IdParams(p["H"], p["p_c"], p["p_i_c"], p["p_mb_ni"]), data)
        if list(data.labels) != self.labels_:
            raise ValidationError(f"class labels {data.labels} differ from the fitted {self.labels_}")
        cp = ClassParams([p[f"H[{l}]"] for l in self.labels_], [p[f"p_c[{l}]"] for l in self.labels_],
                         p["p_i_c"], p["p_mb_ni"])
        return loglik_class(cp, data)


class PlantCaptureBNA(_SurveyEstimator):
    """Normal approximation to the posterior at its mode."""

    def __init__(self, model: str = "id", h_log_mean: float = 0.0, h_log_var: float = 100.0):
        self.model = model
        self.h_log_mean = h_log_mean
        self.h_log_var = h_log_var

    def fit(self, X, y=None):
        data = check_survey(X, self.model)
        fit = bna_fit(self.model, data, PriorSpec(self.h_log_mean, self.h_log_var))
        self.log_posterior_ = fit.log_posterior
        return self._store(fit, data)


class PlantCaptureBayes(BaseEstimator):
    """Posterior sampling by Metropolis-within-Gibbs.

    ``estimate_`` is the posterior median of H. With
    ``uncertainty_propagation=True`` the population binomial is replaced by
    its normal approximation and ``estimate0_`` holds the median of the
    plug-in size h_c / p_c.
    """

    def __init__(self, model: str = "id", chains: int = 3, iterations: int = 30000,
                 burn_in: int = 15000, thin: int = 1, random_state: int | None = None,
                 h_log_mean: float = 0.0, h_log_var: float = 100.0,
                 uncertainty_propagation: bool = False):
        self.model = model
        self.chains = chains
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state
        self.h_log_mean = h_log_mean
        self.h_log_var = h_log_var
        self.uncertainty_propagation = uncertainty_propagation

    def fit(self, X, y=None):
        data = check_survey(X, self.model)
        config = McmcConfig(chains=self.chains, iterations=self.iterations, burn_in=self.burn_in,
                            thin=self.thin, seed=self.random_state)
        priors = PriorSpec(self.h_log_mean, self.h_log_var)
        if self.uncertainty_propagation:
            out = sample_posterior_up(self.model, data, priors, config)
            self.estimate0_ = out.summary["H0"].median
        else:
            out = sample_posterior(self.model, data, priors, config)
        self.posterior_ = out
        self.summary_ = out.summary
        self.rhat_ = out.rhat
        self.ess_ = out.ess
        self.converged_ = out.converged
        self.estimate_ = out.summary["H"].median
        self.labels_ = list(as_classed(data).labels)
        return self

    def summary(self) -> list[dict]:
        check_is_fitted(self, "posterior_")
        return [
            {"parameter": name, "median": s.median, "mean": s.mean, "sd": s.sd,
             "lower": s.lo, "upper": s.hi, "rhat": self.rhat_.get(name), "ess": self.ess_.get(name)}
            for name, s in self.summary_.items()
        ]


class ChapmanBaileyEstimator(BaseEstimator):
    """Classical point estimate with "maybe" plants treated as seen or not seen."""

    def __init__(self, treatment: str = "maybe-as-seen"):
        self.treatment = treatment

    def fit(self, X, y=None):
        data = check_survey(X, "id")
        self.estimate_ = chapman_bailey(data, CbScenario(self.treatment))
        return self
