"""Maximum-likelihood fitting for the basic, identification and class models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from . import likelihood as lk
from .data import BasicCounts, ClassedCounts, IdCounts, as_classed, validate
from .exceptions import (
    InfeasibleData,
    NoCertainCaptures,
    NoCertainPlants,
    NonFiniteEvaluation,
    NonFiniteStart,
    OptimizerFailure,
)
from .numeric import (
    BOUNDARY_THRESHOLD,
    ParamLayout,
    covariance_from_hessian,
    delta_method,
    hessian_richardson,
    nelder_mead,
    wald_interval,
)

__all__ = ["MODELS", "Problem", "build_problem", "MleFit", "mle_basic_closed", "mle_numeric",
           "summarize_point"]

MODELS = ("basic", "id", "class")
_PUSH = 30.0


def _clip(p: float, lo: float = 0.05, hi: float = 0.95) -> float:
    return min(hi, max(lo, p))


def _ratio(num: float, den: float, default: float = 0.5) -> float:
    return num / den if den > 0 else default


@dataclass
class Problem:
    """A model/data pair expressed as a function of the transformed parameters."""

    model: str
    layout: ParamLayout
    loglik: Callable[[np.ndarray], float]
    start: np.ndarray
    fallback: np.ndarray
    labels: tuple[str, ...] = ("all",)
    # smallest population size the data allow, per log coordinate
    h_floor: tuple[float, ...] = ()

    @property
    def h_index(self) -> list[int]:
        return [i for i, k in enumerate(self.layout.kinds) if k == "log"]


def _id_start(c: IdCounts) -> tuple[float, float, float, float]:
    p_c = _clip(_ratio(c.m_i + c.m_yes, c.m_i + c.m_yes + c.m_no))
    p_i_c = _clip(_ratio(c.m_i, c.m_i + c.m_yes))
    p_mb = _clip(_ratio(c.m_mb, c.m_yes + c.m_mb + c.m_no))
    q = lk.conditional_capture_ni(p_c, p_i_c)
    h = (c.residual - c.m_mb * q) / p_c
    h = max(h, c.residual - c.m_mb + 1.0, (c.h_i or 0) + 1.0, 1.0)
    return h, p_c, p_i_c, p_mb


def _h_floor(c: IdCounts | BasicCounts) -> float:
    if isinstance(c, BasicCounts):
        return float(max(c.y - c.m_yes - c.m_mb, 0))
    return float(max(c.residual - c.m_mb, c.h_i or 0, 0))


def _coerce(model: str, data):
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    if model == "class":
        return as_classed(data)
    if isinstance(data, ClassedCounts):
        if data.K != 1:
            raise ValueError(f"model {model!r} needs a single class, got {data.K}")
        data = data.counts[0]
    data = validate(data)
    if model == "basic":
        return data.to_basic() if isinstance(data, IdCounts) else data
    return data.to_id() if isinstance(data, BasicCounts) else data


def build_problem(model: str, data) -> Problem:
    """Set up the log-likelihood on the log/logit scale with starting values."""
    data = _coerce(model, data)
    if model == "basic":
        layout = ParamLayout(("H", "p_c", "p_mb"), ("log", "logit", "logit"))

        def loglik(g):
            return lk.loglik_basic(lk.BasicParams(math.exp(g[0]), expit(g[1]), expit(g[2])), data)

        p_c = _clip(_ratio(data.m_yes, data.m_yes + data.m_no))
        p_mb = _clip(_ratio(data.m_mb, data.m_total))
        h = max(data.y / p_c - data.m_total, data.y - data.m_yes - data.m_mb + 1.0, 1.0)
        start = layout.to_transformed((h, p_c, p_mb))
        fallback = np.array([math.log(max(2.0 * data.y, 1.0)), 0.0, 0.0])
        return Problem(model, layout, loglik, start, fallback, h_floor=(_h_floor(data),))

    if model == "id":
        layout = ParamLayout(("H", "p_c", "p_i_c", "p_mb_ni"), ("log", "logit", "logit", "logit"))

        def loglik(g):
            p = lk.IdParams(math.exp(g[0]), expit(g[1]), expit(g[2]), expit(g[3]))
            return lk.loglik_id(p, data)

        start = layout.to_transformed(_id_start(data))
        fallback = np.array([math.log(max(2.0 * data.y, 1.0)), 0.0, 0.0, 0.0])
        return Problem(model, layout, loglik, start, fallback, h_floor=(_h_floor(data),))

    K = data.K
    labels = tuple(data.labels)
    names = tuple(f"H[{l}]" for l in labels) + tuple(f"p_c[{l}]" for l in labels) + ("p_i_c", "p_mb_ni")
    kinds = ("log",) * K + ("logit",) * K + ("logit", "logit")
    layout = ParamLayout(names, kinds)

    def loglik(g):
        p = lk.ClassParams(
            tuple(np.exp(g[:K])), tuple(expit(g[K:2 * K])), expit(g[2 * K]), expit(g[2 * K + 1])
        )
        return lk.loglik_class(p, data)

    starts = [_id_start(c) for c in data.counts]
    pooled = _id_start(IdCounts(
        sum(c.m_i for c in data.counts), sum(c.m_yes for c in data.counts),
        sum(c.m_mb for c in data.counts), sum(c.m_no for c in data.counts),
        sum(c.y for c in data.counts),
    ))
    natural = [s[0] for s in starts] + [s[1] for s in starts] + [pooled[2], pooled[3]]
    start = layout.to_transformed(natural)
    fallback = np.concatenate([np.log([max(2.0 * c.y, 1.0) for c in data.counts]), np.zeros(K + 2)])
    return Problem(model, layout, loglik, start, fallback, labels,
                   tuple(_h_floor(c) for c in data.counts))


@dataclass
class MleFit:
    """Point estimates, SDs and 95% intervals on the natural scale.

    For the class model the entry ``"H"`` holds the total over classes.
    ``h_rounded`` is the floor of the (total) population estimate.
    """

    model: str
    params: dict[str, float]
    sds: dict[str, float]
    cis: dict[str, tuple[float, float]]
    h_rounded: int
    boundary_flags: dict[str, bool]
    converged: bool
    loglik: float = float("nan")
    gamma_hat: np.ndarray | None = None
    cov_gamma: np.ndarray | None = None
    layout: ParamLayout | None = None
    hessian_clamped: bool = False
    method: str = "mle"
    extra: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.params["H"]

    def row(self, name: str) -> tuple[float, float, float, float]:
        lo, hi = self.cis[name]
        return self.params[name], self.sds[name], lo, hi


def _push_boundaries(objective, gamma: np.ndarray, layout: ParamLayout, tol: float = 1e-9,
                     h_floor: Sequence[float] = ()):
    """Move coordinates onto the edge of the parameter space where the optimum lies.

    A probability whose logit exceeds 5 is pushed to 0 or 1 when the
    likelihood does not drop there. A population size within a relative 1e-3
    of the smallest value the data allow is snapped onto it when that does not
    lower the likelihood (this happens together with a capture probability
    of 1). The two steps alternate until nothing changes.
    """
    gamma = gamma.copy()
    fixed = np.zeros(gamma.size, bool)
    base = objective(gamma)
    log_idx = [i for i, k in enumerate(layout.kinds) if k == "log"]
    changed = True
    while changed:
        changed = False
        for j in np.flatnonzero(layout.probability_mask & ~fixed):
            if abs(gamma[j]) < 5.0:
                continue
            trial = gamma.copy()
            trial[j] = math.copysign(_PUSH, gamma[j])
            val = objective(trial)
            if np.isfinite(val) and val >= base - tol:
                gamma, base = trial, val
                fixed[j] = changed = True
        for j, floor in zip(log_idx, h_floor):
            if fixed[j] or floor <= 0 or math.exp(gamma[j]) > floor * (1.0 + 1e-3):
                continue
            trial = gamma.copy()
            trial[j] = math.log(floor)
            val = objective(trial)
            if np.isfinite(val) and val >= base - tol:
                gamma, base = trial, val
                fixed[j] = changed = True
    fixed |= (np.abs(gamma) > BOUNDARY_THRESHOLD) & layout.probability_mask
    return gamma, fixed


def _free_objective(objective, gamma: np.ndarray, free: np.ndarray):
    def f(sub):
        g = gamma.copy()
        g[free] = sub
        return objective(g)

    return f


def _hessian_near_edge(f, x, step: float = 1e-2, tries: int = 8):
    # Estimates close to the support edge (h just above the captured count)
    # need smaller difference steps; shrink until every evaluation is finite.
    for attempt in range(tries):
        try:
            return hessian_richardson(f, x, step=step / 4**attempt)
        except NonFiniteEvaluation:
            if attempt == tries - 1:
                raise


def optimize_problem(problem: Problem, objective=None):
    """Maximize ``objective`` (default: the log-likelihood), boundary-aware.

    Returns (gamma_hat, value, converged, boundary mask, covariance, clamped).
    The covariance is computed on the non-boundary coordinates only; boundary
    coordinates get zero rows/columns.
    """
    objective = objective or problem.loglik
    layout = problem.layout
    start = problem.start
    if not np.isfinite(objective(start)):
        start = problem.fallback
    try:
        res = nelder_mead(objective, start, layout=layout)
    except NonFiniteStart as exc:
        raise InfeasibleData(f"log-likelihood is not finite at any starting point: {exc}") from None
    gamma, fixed = _push_boundaries(objective, res.gamma_hat, layout, h_floor=problem.h_floor)
    converged = res.converged
    if fixed.any():
        free = ~fixed
        if free.any():
            sub = nelder_mead(_free_objective(objective, gamma, free), gamma[free])
            gamma[free] = sub.gamma_hat
            converged = sub.converged
    value = objective(gamma)
    if not np.isfinite(value):
        raise OptimizerFailure("optimizer ended at a point with non-finite objective")

    n = gamma.size
    cov = np.zeros((n, n))
    free = ~fixed
    clamped = False
    if free.any():
        H = _hessian_near_edge(_free_objective(objective, gamma, free), gamma[free])
        sub_cov, clamped = covariance_from_hessian(H)
        cov[np.ix_(free, free)] = sub_cov
    return gamma, value, converged, fixed, cov, clamped


def summarize_point(problem: Problem, gamma: np.ndarray, cov: np.ndarray, fixed: np.ndarray,
                    class_total: str = "sum_endpoints"):
    """Natural-scale estimates, delta-method SDs and back-transformed Wald CIs."""
    layout = problem.layout
    natural = layout.to_natural(gamma)
    sds = delta_method(gamma, cov, layout)
    sd_gamma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    params, sd_out, cis, flags = {}, {}, {}, {}
    for i, name in enumerate(layout.names):
        value = float(natural[i])
        if fixed[i]:
            value = float(round(value))
            params[name], sd_out[name], cis[name] = value, 0.0, (value, value)
        else:
            params[name], sd_out[name] = value, float(sds[i])
            cis[name] = wald_interval(gamma[i], sd_gamma[i], layout.kinds[i])
        flags[name] = bool(fixed[i])
    if problem.model == "class":
        idx = problem.h_index
        h = natural[idx]
        block = cov[np.ix_(idx, idx)]
        params["H"] = float(h.sum())
        sd_out["H"] = float(math.sqrt(max(h @ block @ h, 0.0)))
        if class_total == "sum_endpoints":
            cis["H"] = (sum(cis[layout.names[i]][0] for i in idx),
                        sum(cis[layout.names[i]][1] for i in idx))
        else:
            cis["H"] = wald_interval(math.log(params["H"]), sd_out["H"] / params["H"], "log")
        flags["H"] = False
    return params, sd_out, cis, flags


def _require_certain_captures(model: str, data) -> None:
    # Without a certainly captured plant the capture probability MLE is 0
    # and the population size runs off to infinity.
    for label, c in as_classed(_coerce(model, data)).classes:
        if c.m_i + c.m_yes == 0:
            where = "" if label == "all" else f" in class {label!r}"
            raise NoCertainCaptures(f"no plant{where} is certainly captured (m_i + m_yes = 0)")


def mle_numeric(model: str, data, *, class_total: str = "sum_endpoints") -> MleFit:
    """Numerical MLE with Hessian-based SDs and Wald intervals.

    Probabilities that run off to 0 or 1 are reported exactly at the edge with
    SD 0 and a point interval, and flagged. For the class model the total
    ``H`` gets its SD from the summed covariance block of the class sizes and
    its interval from the summed class-wise interval endpoints
    (``class_total="sum_endpoints"``) or from a log-scale Wald interval on the
    total (``class_total="log_wald"``).
    """
    _require_certain_captures(model, data)
    problem = build_problem(model, data)
    gamma, value, converged, fixed, cov, clamped = optimize_problem(problem)
    for name, g in zip(problem.layout.names, gamma):
        if name.startswith("p_c") and g <= -BOUNDARY_THRESHOLD:
            raise NoCertainCaptures(f"{name} estimate is 0, so the population size is unbounded")
    params, sds, cis, flags = summarize_point(problem, gamma, cov, fixed, class_total)
    return MleFit(
        model=model,
        params=params,
        sds=sds,
        cis=cis,
        h_rounded=int(math.floor(params["H"])),
        boundary_flags=flags,
        converged=converged,
        loglik=value,
        gamma_hat=gamma,
        cov_gamma=cov,
        layout=problem.layout,
        hessian_clamped=clamped,
    )


def mle_basic_closed(data: BasicCounts) -> MleFit:
    """Closed-form MLE for the basic model, with numerical SDs at that point.

    ``p_c = m_yes / (m_yes + m_no)``, ``p_mb = m_mb / M`` and
    ``H = floor(y / p_c - M)``.
    """
    data = _coerce("basic", data)
    if data.m_yes + data.m_no == 0:
        raise NoCertainPlants("no plant is certain about its capture status (m_yes + m_no = 0)")
    if data.m_yes == 0:
        raise NoCertainCaptures("no plant self-assessed as captured (m_yes = 0); p_c estimate is 0")
    p_c = data.m_yes / (data.m_yes + data.m_no)
    p_mb = data.m_mb / data.m_total
    h_cont = data.y / p_c - data.m_total
    h_floor = int(math.floor(h_cont + 1e-9))

    problem = build_problem("basic", data)
    layout = problem.layout
    fixed = np.array([False, p_c >= 1.0, p_mb <= 0.0 or p_mb >= 1.0])
    natural = (max(h_cont, 1e-3), min(p_c, 1 - 1e-300), min(max(p_mb, 1e-300), 1 - 1e-16))
    gamma = np.array([math.log(natural[0]),
                      math.copysign(_PUSH, 1) if fixed[1] else float(layout.to_transformed(natural)[1]),
                      (math.copysign(_PUSH, p_mb - 0.5) if fixed[2]
                       else float(layout.to_transformed(natural)[2]))])
    cov = np.zeros((3, 3))
    clamped = False
    free = ~fixed
    try:
        H = hessian_richardson(_free_objective(problem.loglik, gamma, free), gamma[free])
        sub, clamped = covariance_from_hessian(H)
        cov[np.ix_(free, free)] = sub
    except NonFiniteEvaluation:
        clamped = True
    params, sds, cis, flags = summarize_point(problem, gamma, cov, fixed)
    params.update(H=h_cont, p_c=p_c, p_mb=p_mb)
    return MleFit(
        model="basic",
        params=params,
        sds=sds,
        cis=cis,
        h_rounded=h_floor,
        boundary_flags=flags,
        converged=True,
        loglik=problem.loglik(gamma),
        gamma_hat=gamma,
        cov_gamma=cov,
        layout=layout,
        hessian_clamped=clamped,
        method="closed",
    )
