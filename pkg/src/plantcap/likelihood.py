"""Cell probabilities, latent bounds and marginal log-likelihoods.

All densities are evaluated in log space with log-gamma factorials, so the
population size ``h`` may be any non-negative real. Support violations give
``-inf`` rather than raising, which keeps optimizers and samplers alive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .data import BasicCounts, ClassedCounts, IdCounts
from .exceptions import InfeasibleData

__all__ = [
    "BasicParams",
    "IdParams",
    "ClassParams",
    "LatentBounds",
    "theta_basic",
    "theta_id",
    "conditional_capture_ni",
    "latent_bounds",
    "log_binom_pmf",
    "log_multinom_pmf",
    "loglik_basic",
    "loglik_id",
    "loglik_class",
]

NEG_INF = -math.inf
_lgamma = math.lgamma


@dataclass(frozen=True)
class BasicParams:
    h: float
    p_c: float
    p_mb: float


@dataclass(frozen=True)
class IdParams:
    h: float
    p_c: float
    p_i_c: float
    p_mb_ni: float


@dataclass(frozen=True)
class ClassParams:
    h_k: tuple[float, ...]
    p_c_k: tuple[float, ...]
    p_i_c: float
    p_mb_ni: float

    def __post_init__(self):
        object.__setattr__(self, "h_k", tuple(float(h) for h in self.h_k))
        object.__setattr__(self, "p_c_k", tuple(float(p) for p in self.p_c_k))
        if len(self.h_k) != len(self.p_c_k):
            raise ValueError("h_k and p_c_k must have the same length")

    @property
    def K(self) -> int:
        return len(self.h_k)

    def for_class(self, k: int) -> IdParams:
        return IdParams(self.h_k[k], self.p_c_k[k], self.p_i_c, self.p_mb_ni)


@dataclass(frozen=True)
class LatentBounds:
    lo: int
    hi: int

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def __len__(self):
        return max(0, self.hi - self.lo + 1)


def theta_basic(p: BasicParams) -> tuple[float, float, float]:
    """Probabilities of a plant answering yes / maybe / no."""
    return (p.p_c * (1.0 - p.p_mb), p.p_mb, (1.0 - p.p_c) * (1.0 - p.p_mb))


def theta_id(p: IdParams) -> tuple[float, float, float, float]:
    """Probabilities of identified / yes / maybe / no for a plant."""
    captured_ni = p.p_c * (1.0 - p.p_i_c)
    return (
        p.p_c * p.p_i_c,
        captured_ni * (1.0 - p.p_mb_ni),
        captured_ni * p.p_mb_ni + (1.0 - p.p_c) * p.p_mb_ni,
        (1.0 - p.p_c) * (1.0 - p.p_mb_ni),
    )


def conditional_capture_ni(p_c: float, p_i_c: float) -> float:
    """Capture probability of a plant that was not identified.

    With ``p_i_c = 0`` this is just ``p_c``.
    """
    captured_ni = p_c * (1.0 - p_i_c)
    denom = captured_ni + (1.0 - p_c)
    if denom <= 0.0:
        return 0.0
    return captured_ni / denom


def _bounds(residual: int, m_mb: int, h_i: int | None, h: float) -> tuple[int, int]:
    # h is allowed to be real; h_c <= h means z >= residual - h.
    lo = max(0, math.ceil(residual - h - 1e-9))
    hi = min(m_mb, residual - (h_i or 0))
    return lo, hi


def latent_bounds(data: IdCounts, h: float) -> LatentBounds:
    """Feasible range of captured "maybe" plants given the population size.

    Raises InfeasibleData when the range is empty, i.e. ``h`` is too small to
    explain the census count (or ``h_i`` exceeds what the census allows).
    """
    if isinstance(data, BasicCounts):
        data = data.to_id()
    lo, hi = _bounds(data.residual, data.m_mb, data.h_i, h)
    if lo > hi:
        raise InfeasibleData(f"no feasible captured-maybe count for h={h} (bounds {lo} > {hi})")
    return LatentBounds(lo, hi)


def _xlogy(k: float, p: float) -> float:
    if k == 0:
        return 0.0
    if p <= 0.0:
        return NEG_INF
    return k * math.log(p)


def log_binom_pmf(k: float, n: float, p: float) -> float:
    """log Binom(k; n, p) with a real-valued size ``n``."""
    if k < 0:
        return NEG_INF
    if k > n:
        # sizes that come back from exp(log(n)) may undershoot by round-off
        if k - n > 1e-9 * max(1.0, n):
            return NEG_INF
        n = k
    return (
        _lgamma(n + 1.0)
        - _lgamma(k + 1.0)
        - _lgamma(n - k + 1.0)
        + _xlogy(k, p)
        + _xlogy(n - k, 1.0 - p)
    )


def log_multinom_pmf(counts: Sequence[int], probs: Sequence[float]) -> float:
    total = sum(counts)
    out = _lgamma(total + 1.0)
    for c, q in zip(counts, probs):
        out += _xlogy(c, q) - _lgamma(c + 1.0)
    return out


def _logsumexp(values: list[float]) -> float:
    top = max(values)
    if top == NEG_INF:
        return NEG_INF
    return top + math.log(sum(math.exp(v - top) for v in values))


def loglik_basic(p: BasicParams, data: BasicCounts) -> float:
    """Log-likelihood of the model without identification.

    The latent split of the census is summed out in closed form:
    ``y - m_yes ~ Binom(h + m_mb, p_c)``.
    """
    if isinstance(data, IdCounts):
        data = data.to_basic()
    captured = data.y - data.m_yes
    size = p.h + data.m_mb
    if captured > size:
        return NEG_INF
    mult = log_multinom_pmf((data.m_yes, data.m_mb, data.m_no), theta_basic(p))
    if mult == NEG_INF:
        return NEG_INF
    return mult + log_binom_pmf(captured, size, p.p_c)


def _log_marginal_latent(p: IdParams, data: IdCounts) -> float:
    residual = data.residual
    lo, hi = _bounds(residual, data.m_mb, data.h_i, p.h)
    if lo > hi:
        return NEG_INF
    q = conditional_capture_ni(p.p_c, p.p_i_c)
    terms = []
    for z in range(lo, hi + 1):
        h_c = residual - z
        t = log_binom_pmf(z, data.m_mb, q) + log_binom_pmf(h_c, p.h, p.p_c)
        if data.h_i is not None:
            t += log_binom_pmf(data.h_i, h_c, p.p_i_c)
        terms.append(t)
    return _logsumexp(terms)


def loglik_id(p: IdParams, data: IdCounts) -> float:
    """Marginal log-likelihood with partial identification.

    Sums the joint density over every feasible number of captured "maybe"
    plants. When ``data.h_i`` is None the identified-target factor is left
    out entirely.
    """
    counts = (data.m_i, data.m_yes, data.m_mb, data.m_no)
    mult = log_multinom_pmf(counts, theta_id(p))
    if mult == NEG_INF:
        return NEG_INF
    return mult + _log_marginal_latent(p, data)


def loglik_class(p: ClassParams, data: ClassedCounts) -> float:
    """Sum of per-class marginal log-likelihoods with shared p_i_c and p_mb_ni."""
    if p.K != data.K:
        raise ValueError(f"parameters have {p.K} classes but data has {data.K}")
    total = 0.0
    for k, counts in enumerate(data.counts):
        total += loglik_id(p.for_class(k), counts)
        if total == NEG_INF:
            break
    return total
