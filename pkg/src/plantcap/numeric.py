"""Parameter transforms, Nelder-Mead, Richardson Hessian and Wald intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .exceptions import NegativeVariance, NonFiniteEvaluation, NonFiniteStart

__all__ = [
    "ParamLayout",
    "OptimResult",
    "nelder_mead",
    "hessian_richardson",
    "covariance_from_hessian",
    "delta_method",
    "wald_interval",
    "BOUNDARY_THRESHOLD",
    "Z95",
]

Z95 = 1.959963984540054
# |logit| beyond this means a probability within ~3e-7 of 0 or 1.
BOUNDARY_THRESHOLD = 15.0
EIGEN_FLOOR = 1e-10


def _forward(kind: str, value):
    if kind == "log":
        return np.log(value)
    if kind == "logit":
        return logit(value)
    if kind == "identity":
        return value
    raise ValueError(f"unknown transform {kind!r}")


def _inverse(kind: str, gamma):
    if kind == "log":
        with np.errstate(over="ignore"):
            return np.exp(gamma)
    if kind == "logit":
        return expit(gamma)
    if kind == "identity":
        return gamma
    raise ValueError(f"unknown transform {kind!r}")


def _derivative(kind: str, gamma):
    """d(natural)/d(gamma)."""
    if kind == "log":
        return np.exp(gamma)
    if kind == "logit":
        s = expit(gamma)
        return s * (1.0 - s)
    return np.ones_like(gamma)


@dataclass(frozen=True)
class ParamLayout:
    """Names and transforms (``"log"`` for counts, ``"logit"`` for probabilities)."""

    names: tuple[str, ...]
    kinds: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(self.names) != len(self.kinds):
            raise ValueError("names and kinds differ in length")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_transformed(self, values: Sequence[float]) -> np.ndarray:
        return np.array([_forward(k, float(v)) for k, v in zip(self.kinds, values)])

    def to_natural(self, gamma: Sequence[float]) -> np.ndarray:
        return np.array([_inverse(k, float(g)) for k, g in zip(self.kinds, gamma)])

    def jacobian_diag(self, gamma: Sequence[float]) -> np.ndarray:
        return np.array([_derivative(k, float(g)) for k, g in zip(self.kinds, gamma)])

    @property
    def probability_mask(self) -> np.ndarray:
        return np.array([k == "logit" for k in self.kinds])


@dataclass
class OptimResult:
    gamma_hat: np.ndarray
    value: float
    converged: bool
    iterations: int
    boundary_flags: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))


def _initial_simplex(x0: np.ndarray, step: float) -> np.ndarray:
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += step * max(1.0, abs(x0[i]) * 0.1)
    return simplex


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    *,
    xtol: float = 1e-8,
    ftol: float = 1e-10,
    max_iter: int = 20000,
    step: float = 0.5,
    restart: bool = True,
    layout: ParamLayout | None = None,
) -> OptimResult:
    """Maximize ``objective`` with the Nelder-Mead simplex method.

    Stops when the simplex is smaller than ``xtol`` or the objective spread
    across its vertices is below ``ftol``, then restarts once from the
    incumbent with a fresh simplex to guard against premature collapse.
    ``boundary_flags`` marks coordinates whose magnitude exceeds
    :data:`BOUNDARY_THRESHOLD` (only logit coordinates when ``layout`` is given).
    """
    x0 = np.asarray(start, dtype=float)
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise NonFiniteStart(f"objective is {f0} at the starting point {x0}")

    def neg(x):
        v = objective(x)
        return -v if np.isfinite(v) else np.inf

    options = dict(xatol=xtol, fatol=ftol, maxiter=max_iter, maxfev=4 * max_iter)
    res = minimize(neg, x0, method="Nelder-Mead",
                   options={**options, "initial_simplex": _initial_simplex(x0, step)})
    iterations = int(res.nit)
    converged = bool(res.success)
    x, fx = np.asarray(res.x, float), float(res.fun)
    if restart:
        res2 = minimize(neg, x, method="Nelder-Mead",
                        options={**options, "initial_simplex": _initial_simplex(x, step / 5)})
        iterations += int(res2.nit)
        if res2.fun <= fx:
            x, fx = np.asarray(res2.x, float), float(res2.fun)
        converged = bool(res2.success)
    mask = layout.probability_mask if layout is not None else np.ones(x.size, bool)
    flags = (np.abs(x) > BOUNDARY_THRESHOLD) & mask
    return OptimResult(x, -fx, converged and np.isfinite(fx), iterations, flags)


def hessian_richardson(
    f: Callable[[np.ndarray], float],
    x: Sequence[float],
    *,
    step: float = 1e-2,
    levels: int = 4,
    factor: float = 2.0,
) -> np.ndarray:
    """Numerical Hessian by central differences with Richardson extrapolation.

    The step for coordinate i starts at ``step * max(|x_i|, 1)`` and is divided
    by ``factor`` at each of ``levels`` levels; the finite-difference tables are
    then extrapolated to zero step. Returns a symmetric matrix.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    cache: dict[tuple, float] = {}

    def ev(offsets: tuple) -> float:
        if offsets in cache:
            return cache[offsets]
        point = x.copy()
        for i, d in offsets:
            point[i] += d
        v = float(f(point))
        if not np.isfinite(v):
            raise NonFiniteEvaluation(f"f is {v} at {point}")
        cache[offsets] = v
        return v

    f0 = ev(())
    h0 = step * np.maximum(np.abs(x), 1.0)
    tables = []
    for level in range(levels):
        h = h0 / factor**level
        D = np.empty((n, n))
        for i in range(n):
            hi = h[i]
            D[i, i] = (ev(((i, hi),)) - 2.0 * f0 + ev(((i, -hi),))) / hi**2
            for j in range(i):
                hj = h[j]
                D[i, j] = D[j, i] = (
                    ev(((i, hi), (j, hj)))
                    - ev(((i, hi), (j, -hj)))
                    - ev(((i, -hi), (j, hj)))
                    + ev(((i, -hi), (j, -hj)))
                ) / (4.0 * hi * hj)
        tables.append(D)
    # Neville-style extrapolation; error terms are even powers of h.
    for m in range(1, levels):
        c = factor ** (2 * m)
        tables = [(c * tables[k + 1] - tables[k]) / (c - 1.0) for k in range(len(tables) - 1)]
    H = tables[0]
    return 0.5 * (H + H.T)


def covariance_from_hessian(hessian: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert the negative Hessian by eigendecomposition.

    Eigenvalues below 1e-10 are clamped; the second return value reports
    whether any clamping happened (a non positive-definite information matrix).
    """
    info = -np.asarray(hessian, dtype=float)
    info = 0.5 * (info + info.T)
    if info.size == 0:
        return np.zeros((0, 0)), False
    vals, vecs = np.linalg.eigh(info)
    clamped = bool(np.any(vals < EIGEN_FLOOR))
    vals = np.maximum(vals, EIGEN_FLOOR)
    cov = (vecs / vals) @ vecs.T
    return 0.5 * (cov + cov.T), clamped


def delta_method(gamma_hat: Sequence[float], cov_gamma: np.ndarray, layout: ParamLayout) -> np.ndarray:
    """Natural-scale standard deviations from a transformed-scale covariance."""
    var = np.diag(np.asarray(cov_gamma, dtype=float))
    if np.any(var < 0):
        raise NegativeVariance(f"negative variance on the transformed scale: {var}")
    return np.sqrt(var) * np.abs(layout.jacobian_diag(gamma_hat))


def wald_interval(gamma_hat: float, sd_gamma: float, kind: str, z: float = Z95) -> tuple[float, float]:
    """95% interval built on the transformed scale and mapped back."""
    if sd_gamma < 0:
        raise ValueError("sd_gamma must be non-negative")
    lo = float(_inverse(kind, gamma_hat - z * sd_gamma))
    hi = float(_inverse(kind, gamma_hat + z * sd_gamma))
    if kind == "logit":
        assert 0.0 <= lo <= hi <= 1.0, (lo, hi)
    elif kind == "log":
        assert 0.0 <= lo <= hi, (lo, hi)
    return lo, hi


def log_expit(g: float) -> float:
    """log(expit(g)) without overflow."""
    return -math.log1p(math.exp(-g)) if g >= 0 else g - math.log1p(math.exp(g))
