"""Monte Carlo studies: synthetic surveys, repeated fits, coverage metrics."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import likelihood as lk
from .bna import bna_fit
from .data import BasicCounts, ClassedCounts, IdCounts, validate
from .exceptions import AllReplicatesFailed, PlantCaptureError, UnknownPreset
from .mcmc import RHAT_THRESHOLD, McmcConfig, PriorSpec, sample_posterior_batch
from .mle import mle_numeric

__all__ = [
    "METHODS",
    "SimScenario",
    "MetricRow",
    "SimReport",
    "allocate",
    "generate",
    "run_study",
    "metrics",
    "preset_scenarios",
    "load_scenarios",
]

METHODS = ("mle", "bayes", "bna", "up")
_ALIASES = {"mcmc": "bayes", "ml": "mle"}
BAYES_CHUNK = 50


def allocate(total: int, weights: Sequence[float]) -> list[int]:
    """Split ``total`` into integers proportional to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    exact = total * w / w.sum()
    base = np.floor(exact).astype(int)
    short = int(total - base.sum())
    # ties go to the earlier class
    order = sorted(range(len(w)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return [int(b) for b in base]


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class SimScenario:
    """One simulation setting.

    ``truth`` maps report parameter names to true values. For the class
    model ``"H"`` is the total population and ``weights`` splits both the
    population and ``M`` across the classes named in ``labels``; the
    per-class capture probabilities are keyed ``"p_c[label]"``.
    """

    model: str
    truth: Mapping[str, float]
    M: int
    replicates: int = 1000
    method: str = "mle"
    seed: int = 0
    labels: tuple[str, ...] = ("easy", "hard")
    weights: tuple[float, ...] = (0.6, 0.4)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    priors: PriorSpec = field(default_factory=PriorSpec)
    name: str = ""

    def __post_init__(self):
        method = _ALIASES.get(self.method, self.method)
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "truth", dict(self.truth))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.model not in ("basic", "id", "class"):
            raise ValueError(f"unknown model {self.model!r}")
        if method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if method == "up" and self.model == "basic":
            raise ValueError("uncertainty propagation needs the 'id' or 'class' model")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.M < 0:
            raise ValueError("M must be non-negative")
        missing = [n for n in self.parameters if n not in self.truth]
        if missing:
            raise ValueError(f"truth is missing {missing}")
        for name, value in self.truth.items():
            if name.startswith("p_") and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} is not a probability")
        if self.truth["H"] < 0:
            raise ValueError("H must be non-negative")
        if self.model == "class" and len(self.labels) != len(self.weights):
            raise ValueError("labels and weights differ in length")

    @property
    def parameters(self) -> list[str]:
        """Parameters reported by the study, in table order."""
        if self.model == "basic":
            names = ["H", "p_c", "p_mb"]
        elif self.model == "id":
            names = ["H", "p_c", "p_mb_ni", "p_i_c"]
        else:
            names = ["H"] + [f"p_c[{l}]" for l in self.labels] + ["p_mb_ni", "p_i_c"]
        return names

    @property
    def reported(self) -> list[str]:
        names = self.parameters
        return names[:1] + ["H0"] + names[1:] if self.method == "up" else names

    def true_value(self, name: str) -> float:
        return float(self.truth["H" if name == "H0" else name])

    def truth_params(self):
        t = self.truth
        if self.model == "basic":
            return lk.BasicParams(t["H"], t["p_c"], t["p_mb"])
        if self.model == "id":
            return lk.IdParams(t["H"], t["p_c"], t["p_i_c"], t["p_mb_ni"])
        h_k = allocate(int(round(t["H"])), self.weights)
        return lk.ClassParams(h_k, [t[f"p_c[{l}]"] for l in self.labels], t["p_i_c"], t["p_mb_ni"])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mcmc"] = asdict(self.mcmc)
        out["priors"] = asdict(self.priors)
        return out


# --------------------------------------------------------------- generation


def _generate_id(p: lk.IdParams, M: int, rng: np.random.Generator, with_hi: bool) -> IdCounts:
    m_i, m_yes, m_mb, m_no = (int(v) for v in rng.multinomial(M, lk.theta_id(p)))
    q = lk.conditional_capture_ni(p.p_c, p.p_i_c)
    m_mb_c = int(rng.binomial(m_mb, q))
    h_c = int(rng.binomial(int(round(p.h)), p.p_c))
    h_i = int(rng.binomial(h_c, p.p_i_c)) if with_hi else None
    return IdCounts(m_i, m_yes, m_mb, m_no, m_i + m_yes + m_mb_c + h_c, h_i)


def generate(model: str, truth, M, rng: np.random.Generator, *, weights: Sequence[float] | None = None,
             labels: Sequence[str] | None = None):
    """Draw one synthetic survey from the model's generative process.

    ``truth`` is a BasicParams, IdParams or ClassParams. For the class model
    ``M`` may be a per-class sequence or a total, which is split across the
    classes by ``weights`` (default: proportional to the class sizes).
    """
    if model == "basic":
        m_yes, m_mb, m_no = (int(v) for v in rng.multinomial(int(M), lk.theta_basic(truth)))
        m_mb_c = int(rng.binomial(m_mb, truth.p_c))
        h_c = int(rng.binomial(int(round(truth.h)), truth.p_c))
        return validate(BasicCounts(m_yes, m_mb, m_no, m_yes + m_mb_c + h_c))
    if model == "id":
        return validate(_generate_id(truth, int(M), rng, with_hi=True))
    if model != "class":
        raise ValueError(f"unknown model {model!r}")
    K = truth.K
    if np.ndim(M) == 0:
        M = allocate(int(M), weights if weights is not None else truth.h_k)
    if len(M) != K:
        raise ValueError("M has the wrong number of classes")
    labels = list(labels) if labels is not None else [f"class{k + 1}" for k in range(K)]
    classes = tuple((labels[k], _generate_id(truth.for_class(k), int(M[k]), rng, with_hi=True))
                    for k in range(K))
    return validate(ClassedCounts(classes))


# ------------------------------------------------------------------ metrics


@dataclass(frozen=True)
class MetricRow:
    parameter: str
    true: float
    estimate: float
    sd: float
    emp_sd: float
    rbias: float
    rrmse: float
    cp: float
    lci: float
    n: int


def metrics(name: str, truth: float, estimates, sds, intervals) -> MetricRow:
    """Aggregate per-replicate results for one parameter.

    RBias and RRMSE are relative to ``truth``; ``sd`` is the mean reported SD
    and ``emp_sd`` the (population) SD of the estimates, so that
    ``rrmse**2 == rbias**2 + (emp_sd / truth)**2``.
    """
    est = np.asarray(estimates, dtype=float)
    n = est.size
    if n == 0:
        raise ValueError("no estimates to aggregate")
    lo = np.asarray([i[0] for i in intervals], dtype=float)
    hi = np.asarray([i[1] for i in intervals], dtype=float)
    mean = math.fsum(est) / n
    mse = math.fsum((est - truth) ** 2) / n
    var = math.fsum((est - mean) ** 2) / n
    scale = truth if truth != 0 else 1.0
    return MetricRow(
        parameter=name,
        true=truth,
        estimate=mean,
        sd=math.fsum(np.asarray(sds, dtype=float)) / n,
        emp_sd=math.sqrt(var),
        rbias=(mean - truth) / scale,
        rrmse=math.sqrt(mse) / abs(scale),
        cp=float(np.mean((lo <= truth) & (truth <= hi))),
        lci=math.fsum(hi - lo) / n,
        n=n,
    )


@dataclass
class SimReport:
    scenario: SimScenario
    rows: list[MetricRow]
    failures: int
    failure_codes: dict[str, int]
    nonconverged: int = 0
    wall_time: float = float("nan")

    COLUMNS = ("Method", "M", "Parameter", "True Value", "Estimate", "SD", "EmpSD",
               "RBias", "RRMSE", "CP", "LCI", "N")

    def row(self, name: str) -> MetricRow:
        for r in self.rows:
            if r.parameter == name:
                return r
        raise KeyError(name)

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            out.append(dict(zip(self.COLUMNS, (
                self.scenario.method, self.scenario.M, r.parameter, r.true, r.estimate, r.sd,
                r.emp_sd, r.rbias, r.rrmse, r.cp, r.lci, r.n))))
        return out

    def to_delimited(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for rec in self.records():
            w.writerow([_fmt(v) for v in rec.values()])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "rows": self.records(),
            "failures": self.failures,
            "failure_codes": dict(self.failure_codes),
            "nonconverged": self.nonconverged,
        }


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}" if abs(v) < 1e6 else f"{v:.1f}"
    return str(v)


# ----------------------------------------------------------------- running


def _replicate_streams(seed: int, index: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    data_ss, fit_ss = np.random.SeedSequence(seed, spawn_key=(index,)).spawn(2)
    return data_ss, fit_ss


def _make_data(scenario: SimScenario, index: int):
    data_ss, fit_ss = _replicate_streams(scenario.seed, index)
    rng = np.random.default_rng(data_ss)
    data = generate(scenario.model, scenario.truth_params(), scenario.M, rng,
                    weights=scenario.weights, labels=scenario.labels)
    return data, fit_ss


def _point_record(scenario: SimScenario, fit) -> dict:
    rec = {}
    for name in scenario.parameters:
        est = fit.h_rounded if name == "H" else fit.params[name]
        rec[name] = (float(est), fit.sds[name], fit.cis[name])
    return rec


def _fit_points(scenario: SimScenario, indices: Sequence[int]) -> list:
    fitter = mle_numeric if scenario.method == "mle" else (
        lambda model, data: bna_fit(model, data, scenario.priors))
    out = []
    for i in indices:
        data, _ = _make_data(scenario, i)
        try:
            out.append((i, _point_record(scenario, fitter(scenario.model, data)), True))
        except PlantCaptureError as exc:
            out.append((i, exc.code, True))
    return out


def _fit_bayes(scenario: SimScenario, indices: Sequence[int]) -> list:
    pairs = [_make_data(scenario, i) for i in indices]
    datasets = [p[0] for p in pairs]
    seeds = [p[1] for p in pairs]
    up = scenario.method == "up"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        outputs = sample_posterior_batch(scenario.model, datasets, scenario.priors, scenario.mcmc,
                                         seeds, up=up)
    out = []
    for i, res in zip(indices, outputs):
        rec = {}
        for name in scenario.reported:
            s = res.summary[name]
            rec[name] = (s.median, s.sd, (s.lo, s.hi))
        ok = not res.rhat or max(res.rhat.values()) <= RHAT_THRESHOLD
        out.append((i, rec, ok))
    return out


def _run_chunk(scenario: SimScenario, indices: Sequence[int]) -> list:
    if scenario.method in ("bayes", "up"):
        return _fit_bayes(scenario, indices)
    return _fit_points(scenario, indices)


def _chunks(n: int, size: int) -> list[list[int]]:
    return [list(range(s, min(s + size, n))) for s in range(0, n, size)]


def run_study(scenario: SimScenario, *, jobs: int | None = 1) -> SimReport:
    """Generate and fit ``scenario.replicates`` data sets and aggregate metrics.

    Each replicate draws from its own stream derived from ``(seed, index)``,
    so results do not depend on ``jobs`` or on chunking. Replicates whose fit
    raises a package error are excluded and counted by error code.
    """
    start = time.perf_counter()
    n = scenario.replicates
    jobs = (os.cpu_count() or 1) if jobs is None else max(1, int(jobs))
    bayes = scenario.method in ("bayes", "up")
    size = BAYES_CHUNK if bayes else max(1, math.ceil(n / jobs))
    chunks = _chunks(n, size)
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(chunks))) as pool:
            parts = list(pool.map(_run_chunk, [scenario] * len(chunks), chunks))
    else:
        parts = [_run_chunk(scenario, c) for c in chunks]
    results = sorted((r for part in parts for r in part), key=lambda r: r[0])

    good = [r[1] for r in results if isinstance(r[1], dict)]
    codes = Counter(r[1] for r in results if not isinstance(r[1], dict))
    if not good:
        raise AllReplicatesFailed(f"all {n} replicates failed: {dict(codes)}")
    rows = []
    for name in scenario.reported:
        est, sds, cis = zip(*(rec[name] for rec in good))
        rows.append(metrics(name, scenario.true_value(name), est, sds, cis))
    nonconv = sum(1 for r in results if isinstance(r[1], dict) and not r[2])
    return SimReport(scenario, rows, sum(codes.values()), dict(codes), nonconv,
                     time.perf_counter() - start)


# ------------------------------------------------------------------ presets

_PRESETS = {
    "table1": ("basic", {"p_c": 0.7, "p_mb": 0.2}, {15: 150, 100: 1500}),
    "table2": ("id", {"p_c": 0.7, "p_mb_ni": 0.2, "p_i_c": 0.8}, {15: 150, 100: 1500}),
    "table3": ("class", {"p_c[easy]": 0.9, "p_c[hard]": 0.4, "p_mb_ni": 0.2, "p_i_c": 0.8},
               {30: 300, 100: 1500}),
}
PRESETS = tuple(_PRESETS)


def preset_scenarios(name: str, method: str = "mle", *, M: int | str | None = None,
                     replicates: int = 1000, seed: int = 0, mcmc: McmcConfig | None = None,
                     priors: PriorSpec | None = None) -> list[SimScenario]:
    """Scenarios behind the published simulation tables.

    ``M`` selects one plant count (15/30, 100, or ``"small"``/``"large"``);
    by default both settings are returned.
    """
    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    model, probs, sizes = _PRESETS[name]
    plant_counts = sorted(sizes)
    if M is not None:
        key = {"small": plant_counts[0], "large": plant_counts[-1]}.get(str(M).lower(), M)
        try:
            key = int(key)
        except ValueError:
            raise UnknownPreset(f"preset {name!r} has no M={M!r}") from None
        if key not in sizes:
            raise UnknownPreset(f"preset {name!r} has no M={M}; available: {plant_counts}")
        plant_counts = [key]
    out = []
    for m in plant_counts:
        out.append(SimScenario(
            model=model, truth={"H": sizes[m], **probs}, M=m, replicates=replicates,
            method=method, seed=seed, mcmc=mcmc or McmcConfig(), priors=priors or PriorSpec(),
            name=f"{name}-{_ALIASES.get(method, method)}-M{m}",
        ))
    return out


def _scenario_from_dict(d: Mapping, defaults: Mapping) -> list[SimScenario]:
    d = {**defaults, **d}
    mcmc = McmcConfig(**d.pop("mcmc", {}) or {})
    priors = PriorSpec(**d.pop("priors", {}) or {})
    if "preset" in d:
        return preset_scenarios(d["preset"], d.get("method", "mle"), M=d.get("M"),
                                replicates=d.get("replicates", 1000), seed=d.get("seed", 0),
                                mcmc=mcmc, priors=priors)
    allowed = {f for f in SimScenario.__dataclass_fields__} - {"mcmc", "priors"}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown scenario field(s): {sorted(unknown)}")
    return [SimScenario(mcmc=mcmc, priors=priors, **d)]


def load_scenarios(path) -> list[SimScenario]:
    """Read scenarios from a JSON file.

    The file holds one scenario object or ``{"defaults": {...}, "scenarios":
    [...]}``. Each object either names a ``preset`` or gives ``model``,
    ``truth`` and ``M`` explicitly; ``mcmc`` and ``priors`` sub-objects map
    onto McmcConfig and PriorSpec.
    """
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if "scenarios" in payload:
        defaults = payload.get("defaults", {})
        items = payload["scenarios"]
    else:
        defaults, items = {}, [payload]
    out = []
    for item in items:
        out.extend(_scenario_from_dict(item, defaults))
    return out


def with_overrides(scenario: SimScenario, **changes) -> SimScenario:
    return replace(scenario, **{k: v for k, v in changes.items() if v is not None})
