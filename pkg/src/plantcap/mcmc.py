"""Metropolis-within-Gibbs sampling for the plant-capture models.

One sweep updates, in order:

* every probability by a random walk on the logit scale (uniform priors, so
  the acceptance ratio carries the logit Jacobian ``log p(1-p)``);
* every captured-"maybe" count by a uniform proposal over its feasible range,
  with the captured-target count recomputed from the census identity so that
  ``m_i + m_yes + m_mb_c + h_c = y`` holds exactly;
* every population size by a symmetric integer random walk under a rounded
  log-normal prior;
* each (capture probability, population size) pair jointly: a logit random
  walk on p_c followed by an independence draw of the uncaptured count from
  its negative binomial given the new p_c. Without this move the chains crawl
  along the ridge H p_c ~ h_c.

Chains are vectorised: many chains (possibly for different data sets) advance
together, but each chain consumes random numbers from its own generator, so
its trajectory does not depend on what else is in the batch.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, gammaln, logit, xlog1py, xlogy
from scipy.stats import nbinom, norm

from .data import ClassedCounts, IdCounts, as_classed
from .exceptions import InsufficientDraws, NoFeasibleInit
from .likelihood import conditional_capture_ni
from .mle import _coerce, _id_start

__all__ = [
    "PriorSpec",
    "McmcConfig",
    "McmcOutput",
    "Summary",
    "sample_posterior",
    "sample_posterior_up",
    "sample_posterior_batch",
    "diagnostics",
    "split_rhat",
    "effective_sample_size",
    "RHAT_THRESHOLD",
]

RHAT_THRESHOLD = 1.05
_EPS = 1e-15


@dataclass(frozen=True)
class PriorSpec:
    """Uniform(0,1) on probabilities; rounded log-normal on population sizes.

    ``h_log_var`` is the variance of log H. ``flat=True`` switches every
    prior off on the transformed scale (a reference point for the normal
    approximation; not a proper prior for sampling).
    """

    h_log_mean: float = 0.0
    h_log_var: float = 100.0
    flat: bool = False

    @classmethod
    def flat_transformed(cls) -> "PriorSpec":
        return cls(flat=True)

    def log_h(self, h):
        """Log prior mass of integer H (continuous density at the integer)."""
        h = np.asarray(h, dtype=float)
        with np.errstate(divide="ignore"):
            lh = np.log(h)
        return -lh - (lh - self.h_log_mean) ** 2 / (2.0 * self.h_log_var) - 0.5 * math.log(
            2.0 * math.pi * self.h_log_var
        )

    def log_gamma_h(self, gamma):
        """Log density of log H on the transformed scale (Jacobian included)."""
        if self.flat:
            return 0.0 * np.asarray(gamma, dtype=float)
        g = np.asarray(gamma, dtype=float)
        return -((g - self.h_log_mean) ** 2) / (2.0 * self.h_log_var) - 0.5 * math.log(
            2.0 * math.pi * self.h_log_var
        )

    def log_gamma_p(self, gamma):
        """Uniform(0,1) prior expressed on the logit scale: log p(1-p)."""
        g = np.asarray(gamma, dtype=float)
        if self.flat:
            return 0.0 * g
        return -np.logaddexp(0.0, -g) - np.logaddexp(0.0, g)


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 3
    iterations: int = 30_000
    burn_in: int = 15_000
    thin: int = 1
    seed: int | None = None
    adapt_every: int = 50
    target_accept: tuple[float, float] = (0.30, 0.45)

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass
class Summary:
    median: float
    mean: float
    sd: float
    lo: float
    hi: float

    @classmethod
    def of(cls, x: np.ndarray) -> "Summary":
        x = np.asarray(x, dtype=float).ravel()
        lo, med, hi = np.quantile(x, [0.025, 0.5, 0.975])
        return cls(float(med), float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0,
                   float(lo), float(hi))


@dataclass
class McmcOutput:
    """Retained draws (``draws[name]`` has shape (chains, n)) and their summaries."""

    model: str
    draws: dict[str, np.ndarray]
    summary: dict[str, Summary]
    rhat: dict[str, float]
    ess: dict[str, float]
    config: McmcConfig
    acceptance: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    up: bool = False
    labels: tuple[str, ...] = ("all",)

    @property
    def converged(self) -> bool:
        vals = [v for v in self.rhat.values() if np.isfinite(v)]
        return bool(vals) and max(vals) <= RHAT_THRESHOLD

    @property
    def parameter_names(self) -> list[str]:
        return [n for n in self.draws if not n.startswith(("m_mb_c", "h_c"))]

    def median(self, name: str = "H") -> float:
        return self.summary[name].median

    def export(self, directory, prefix: str = "chain") -> list:
        """Write one CSV per chain (header = variable names, one row per draw)."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = list(self.draws)
        paths = []
        for c in range(self.config.chains):
            path = directory / f"{prefix}{c + 1}.csv"
            block = np.column_stack([self.draws[n][c] for n in names])
            np.savetxt(path, block, delimiter=",", header=",".join(names), comments="", fmt="%.10g")
            paths.append(path)
        return paths


# ----------------------------------------------------------------- diagnostics


def _split(draws: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[None, :]
    half = draws.shape[1] // 2
    return np.concatenate([draws[:, :half], draws[:, draws.shape[1] - half:]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    from scipy.stats import rankdata

    ranks = rankdata(x, method="average").reshape(x.shape)
    return norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _rhat_basic(x: np.ndarray) -> float:
    m, n = x.shape
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W <= 0:
        return 1.0 if B <= 0 else math.inf
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def _check_draws(draws) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2 or draws.shape[1] < 100:
        raise InsufficientDraws(
            f"need >= 2 chains with >= 100 draws each, got shape {draws.shape}"
        )
    return draws


def _is_constant(draws: np.ndarray) -> bool:
    return bool(np.all(draws == draws.flat[0]))


def split_rhat(draws) -> float:
    """Rank-normalized split R-hat (max of the bulk and folded versions)."""
    draws = _check_draws(draws)
    if _is_constant(draws):
        return 1.0
    x = _split(draws)
    bulk = _rhat_basic(_rank_normalize(x))
    folded = _rhat_basic(_rank_normalize(np.abs(x - np.median(x))))
    return max(bulk, folded)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n]
    return acov / n


def effective_sample_size(draws) -> float:
    """Bulk ESS on rank-normalized split chains.

    Autocorrelations are summed in consecutive pairs and the sum is truncated
    at the first negative pair. Returns NaN for constant draws.
    """
    draws = _check_draws(draws)
    if _is_constant(draws):
        return math.nan
    x = _rank_normalize(_split(draws))
    m, n = x.shape
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    W = chain_var.mean()
    var_plus = W * (n - 1.0) / n + x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau_sum = 0.0
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau_sum += pair
        t += 2
    tau = -1.0 + 2.0 * tau_sum
    tau = max(tau, 1.0 / math.log10(m * n))
    return m * n / tau


def diagnostics(draws: dict[str, np.ndarray] | np.ndarray):
    """Split R-hat and ESS for each variable.

    Accepts an array of shape (chains, n) or a mapping of such arrays; returns
    ``(rhat, ess, degenerate)`` for an array, or three dicts for a mapping.
    Constant draws get R-hat 1, ESS NaN and ``degenerate=True``.
    """
    if isinstance(draws, dict):
        out_r, out_e, out_d = {}, {}, {}
        for name, d in draws.items():
            out_r[name], out_e[name], out_d[name] = diagnostics(d)
        return out_r, out_e, out_d
    arr = _check_draws(draws)
    degenerate = _is_constant(arr)
    return split_rhat(arr), effective_sample_size(arr), degenerate


# --------------------------------------------------------------------- sampler


def _lchoose(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _seed_sequences(seed, n: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


class _BatchSampler:
    """State and kernels for B independent chains over K classes."""

    def __init__(self, model: str, datasets: Sequence[ClassedCounts], chain_seeds, priors: PriorSpec,
                 config: McmcConfig, up: bool = False, fixed_h: int | None = None):
        self.model = model
        self.up = up
        self.priors = priors
        self.config = config
        self.fixed_h = fixed_h
        self.K = K = datasets[0].K
        rows = []
        for ds, seeds in zip(datasets, chain_seeds):
            if ds.K != K:
                raise ValueError("all data sets in a batch need the same number of classes")
            for _ in seeds:
                rows.append(ds.counts)
        self.rngs = [np.random.default_rng(s) for seeds in chain_seeds for s in seeds]
        self.B = B = len(rows)

        def col(attr, default=0):
            return np.array([[getattr(c, attr) if getattr(c, attr) is not None else default
                              for c in r] for r in rows], dtype=float).reshape(B, K)

        self.mi, self.my, self.mm, self.mn, self.y = (col(a) for a in ("m_i", "m_yes", "m_mb", "m_no", "y"))
        self.hi_obs = col("h_i")
        self.has_hi = np.array([[c.h_i is not None for c in r] for r in rows]).reshape(B, K)
        self.r = self.y - self.mi - self.my
        self.z_hi = np.minimum(self.mm, self.r - self.hi_obs)
        if np.any(self.z_hi < 0):
            raise NoFeasibleInit(
                "identified targets exceed the census residual; no latent configuration is feasible"
            )
        self.sample_pic = model != "basic"
        self._init_state(rows)

    # -- initial state -------------------------------------------------------
    def _init_state(self, rows):
        B, K = self.B, self.K
        pc = np.empty((B, K))
        H = np.empty((B, K))
        pic = np.empty(B)
        pmb = np.empty(B)
        for b, counts in enumerate(rows):
            rng = self.rngs[b]
            starts = [_id_start(c) for c in counts]
            jitter = rng.standard_normal(2 * K + 2)
            for k, (h, p_c, p_i_c, p_mb) in enumerate(starts):
                pc[b, k] = expit(logit(p_c) + 0.5 * jitter[k])
                H[b, k] = h * math.exp(0.2 * jitter[K + k])
            pic[b] = expit(logit(np.mean([s[2] for s in starts])) + 0.5 * jitter[2 * K])
            pmb[b] = expit(logit(np.mean([s[3] for s in starts])) + 0.5 * jitter[2 * K + 1])
        if not self.sample_pic:
            pic[:] = 0.0
        self.pc, self.pic, self.pmb = pc, pic, pmb
        q = self._q(pc, pic)
        z = np.clip(np.round(self.mm * q), 0, self.z_hi)
        if self.fixed_h is not None:
            H = np.full((B, K), float(self.fixed_h))
            z = np.clip(z, np.maximum(0, self.r - H), self.z_hi)
            if np.any(self.r - z > H):
                raise NoFeasibleInit(f"fixed H={self.fixed_h} cannot explain the census")
        else:
            H = np.maximum(np.round(H), np.maximum(self.r - z, 1.0))
        self.z, self.H = z, H
        self.scale_pc = np.full((B, K), 0.5)
        self.scale_pic = np.full(B, 0.5)
        self.scale_pmb = np.full(B, 0.5)
        self.scale_H = np.maximum(1.0, np.ceil(0.05 * H))
        self.scale_joint = np.full((B, K), 0.5)

    # -- pieces of the log target ----------------------------------------------
    @staticmethod
    def _q(pc, pic):
        pic = pic[:, None] if np.ndim(pic) == 1 else pic
        cap_ni = pc * (1.0 - pic)
        return cap_ni / (cap_ni + 1.0 - pc)

    def _plant_terms(self, pc, pic):
        """Multinomial + captured-maybe binomial, per class, without constants.

        The p_mb_ni factors of the multinomial separate out (see ``_f_pmb``).
        """
        pic_ = pic[:, None]
        cap_ni = pc * (1.0 - pic_)
        a = cap_ni + 1.0 - pc
        q = cap_ni / a
        z = self.z
        return (
            xlogy(self.mi, pc * pic_)
            + xlogy(self.my, cap_ni)
            + xlogy(self.mm, a)
            + xlog1py(self.mn, -pc)
            + xlogy(z, q)
            + xlog1py(self.mm - z, -q)
        )

    def _target_terms(self, pc):
        hc = self.r - self.z
        return xlogy(hc, pc) + xlog1py(self.H - hc, -pc)

    def _f_rest(self, pc):
        return self._plant_terms(pc, self.pic) + np.log(pc) + np.log1p(-pc)

    def _f_pc(self, pc):
        out = self._f_rest(pc)
        if not self.up:
            out = out + self._target_terms(pc)
        return out

    def _f_pic(self, pic):
        out = self._plant_terms(self.pc, pic)
        hc = self.r - self.z
        pic_ = pic[:, None]
        out = out + np.where(self.has_hi, xlogy(self.hi_obs, pic_) + xlog1py(hc - self.hi_obs, -pic_), 0.0)
        return out.sum(axis=1) + np.log(pic) + np.log1p(-pic)

    def _f_pmb(self, pmb):
        pmb_ = pmb[:, None]
        out = xlog1py(self.my + self.mn, -pmb_) + xlogy(self.mm, pmb_)
        return out.sum(axis=1) + np.log(pmb) + np.log1p(-pmb)

    def _g_z(self, z):
        q = self._q(self.pc, self.pic)
        hc = self.r - z
        out = _lchoose(self.mm, z) + xlogy(z, q) + xlog1py(self.mm - z, -q)
        if not self.up:
            out = out + _lchoose(self.H, hc) + xlogy(hc, self.pc) + xlog1py(self.H - hc, -self.pc)
        pic_ = self.pic[:, None]
        out = out + np.where(self.has_hi, _lchoose(hc, self.hi_obs) + xlog1py(hc - self.hi_obs, -pic_), 0.0)
        return out

    def _u_h(self, H):
        hc = self.r - self.z
        with np.errstate(invalid="ignore", divide="ignore"):
            out = _lchoose(H, hc) + xlog1py(H - hc, -self.pc) + self.priors.log_h(H)
        return np.where((H >= hc) & (H >= 1), out, -np.inf)

    # -- sweep ---------------------------------------------------------------
    def _random_block(self, size: int):
        K = self.K
        normals = np.stack([rng.standard_normal((size, 2 * K + 2)) for rng in self.rngs], axis=1)
        uniforms = np.stack([rng.random((size, 7 * K + 2)) for rng in self.rngs], axis=1)
        return normals, uniforms

    def run(self):
        cfg = self.config
        B, K = self.B, self.K
        n_keep = cfg.retained
        keep = {
            "pc": np.empty((n_keep, B, K)),
            "pic": np.empty((n_keep, B)),
            "pmb": np.empty((n_keep, B)),
            "H": np.empty((n_keep, B, K)),
            "z": np.empty((n_keep, B, K)),
        }
        acc = {k: np.zeros(s) for k, s in
               (("pc", (B, K)), ("pic", B), ("pmb", B), ("H", (B, K)), ("z", (B, K)), ("joint", (B, K)))}
        win = {k: np.zeros_like(v) for k, v in acc.items()}
        lo_t, hi_t = cfg.target_accept
        block = 512
        slot = 0
        kept = 0
        for it in range(cfg.iterations):
            if it % block == 0:
                normals, uniforms = self._random_block(min(block, cfg.iterations - it))
                slot = 0
            nz, un = normals[slot], uniforms[slot]
            slot += 1
            with np.errstate(divide="ignore"):
                logu = np.log(un)

            # (a) probabilities, random walk on the logit scale
            g_new = logit(self.pc) + self.scale_pc * nz[:, :K]
            pc_new = np.clip(expit(g_new), _EPS, 1 - _EPS)
            ok = logu[:, :K] < self._f_pc(pc_new) - self._f_pc(self.pc)
            self.pc = np.where(ok, pc_new, self.pc)
            win["pc"] += ok

            if self.sample_pic:
                pic_new = np.clip(expit(logit(self.pic) + self.scale_pic * nz[:, K]), _EPS, 1 - _EPS)
                ok = logu[:, K] < self._f_pic(pic_new) - self._f_pic(self.pic)
                self.pic = np.where(ok, pic_new, self.pic)
                win["pic"] += ok

            pmb_new = np.clip(expit(logit(self.pmb) + self.scale_pmb * nz[:, K + 1]), _EPS, 1 - _EPS)
            ok = logu[:, K + 1] < self._f_pmb(pmb_new) - self._f_pmb(self.pmb)
            self.pmb = np.where(ok, pmb_new, self.pmb)
            win["pmb"] += ok

            # (b) captured-maybe counts, uniform over the feasible range
            z_lo = np.zeros_like(self.z) if self.up else np.maximum(0.0, self.r - self.H)
            width = self.z_hi - z_lo + 1.0
            z_new = z_lo + np.floor(un[:, K + 2:2 * K + 2] * width)
            ok = (z_new != self.z) & (logu[:, 2 * K + 2:3 * K + 2] < self._g_z(z_new) - self._g_z(self.z))
            self.z = np.where(ok, z_new, self.z)
            win["z"] += ok

            # (c) population sizes, symmetric integer random walk
            if not self.up and self.fixed_h is None:
                step = np.maximum(1.0, np.round(self.scale_H))
                j = np.floor(un[:, 3 * K + 2:4 * K + 2] * 2.0 * step)
                d = np.where(j < step, j - step, j - step + 1.0)
                H_new = self.H + d
                ok = logu[:, 4 * K + 2:5 * K + 2] < self._u_h(H_new) - self._u_h(self.H)
                self.H = np.where(ok, H_new, self.H)
                win["H"] += ok

                # (d) joint (p_c, H) move along the H * p_c ridge: random walk on
                # logit p_c, then H - h_c ~ NegBin(h_c + 1, p_c'). The binomial
                # factor cancels against the proposal, leaving plant terms,
                # the 1/p_c normaliser and the H prior in the ratio.
                hc = self.r - self.z
                pc_new = np.clip(expit(logit(self.pc) + self.scale_joint * nz[:, K + 2:2 * K + 2]),
                                 _EPS, 1 - _EPS)
                H_new = hc + nbinom.ppf(un[:, 5 * K + 2:6 * K + 2], hc + 1.0, pc_new)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = (self._f_rest(pc_new) - np.log(pc_new) + self.priors.log_h(H_new)) - (
                        self._f_rest(self.pc) - np.log(self.pc) + self.priors.log_h(self.H)
                    )
                ok = np.isfinite(H_new) & (H_new >= 1) & (logu[:, 6 * K + 2:7 * K + 2] < ratio)
                self.pc = np.where(ok, pc_new, self.pc)
                self.H = np.where(ok, H_new, self.H)
                win["joint"] += ok

            if it < cfg.burn_in and (it + 1) % cfg.adapt_every == 0:
                self._adapt(win, cfg.adapt_every, lo_t, hi_t)
                for k in win:
                    acc[k] += win[k]
                    win[k][...] = 0
            if it == cfg.burn_in - 1:
                for k in win:
                    win[k][...] = 0
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                keep["pc"][kept] = self.pc
                keep["pic"][kept] = self.pic
                keep["pmb"][kept] = self.pmb
                keep["H"][kept] = self.H
                keep["z"][kept] = self.z
                kept += 1
        n_post = cfg.iterations - cfg.burn_in
        rates = {k: win[k] / max(n_post, 1) for k in win}
        return keep, rates

    def _adapt(self, win, n, lo_t, hi_t):
        for name, attr in (("pc", "scale_pc"), ("pic", "scale_pic"), ("pmb", "scale_pmb"), ("H", "scale_H"),
                           ("joint", "scale_joint")):
            rate = win[name] / n
            factor = np.where(rate < lo_t, math.exp(-0.15), np.where(rate > hi_t, math.exp(0.15), 1.0))
            setattr(self, attr, getattr(self, attr) * factor)
        self.scale_H = np.maximum(self.scale_H, 0.5)


def _names(model: str, labels: Sequence[str]) -> dict:
    if model == "class":
        return {
            "H": [f"H[{l}]" for l in labels],
            "pc": [f"p_c[{l}]" for l in labels],
            "z": [f"m_mb_c[{l}]" for l in labels],
            "hc": [f"h_c[{l}]" for l in labels],
            "pic": "p_i_c",
            "pmb": "p_mb_ni",
        }
    return {"H": ["H"], "pc": ["p_c"], "z": ["m_mb_c"], "hc": ["h_c"], "pic": "p_i_c",
            "pmb": "p_mb" if model == "basic" else "p_mb_ni"}


def _assemble(model, sampler: _BatchSampler, keep, rates, config, labels, up, fixed_h, dataset_index,
              with_diagnostics=True) -> McmcOutput:
    C = config.chains
    sl = slice(dataset_index * C, (dataset_index + 1) * C)
    names = _names(model, labels)
    K = sampler.K
    draws: dict[str, np.ndarray] = {}

    def chains(arr):
        return np.ascontiguousarray(np.moveaxis(arr, 0, -1))  # (..., n) -> chains first

    pc = chains(keep["pc"][:, sl, :])  # (C, K, n)
    H = chains(keep["H"][:, sl, :])
    z = chains(keep["z"][:, sl, :])
    r = sampler.r[sl][:, :, None]
    hc = r - z
    if up:
        rngs = sampler.rngs[sl]
        h0 = hc / pc
        sd = np.sqrt(np.maximum(h0 * (1.0 - pc) / pc, 0.0))
        noise = np.stack([rng.standard_normal(h0.shape[1:]) for rng in rngs])
        H = h0 + sd * noise
        if model == "class":
            draws["H0"] = h0.sum(axis=1)
        else:
            draws["H0"] = h0[:, 0]
    if model == "class":
        draws["H"] = H.sum(axis=1)
    for k in range(K):
        if model == "class" or k == 0:
            draws[names["H"][k]] = H[:, k]
            draws[names["pc"][k]] = pc[:, k]
    if model != "basic":
        draws[names["pic"]] = chains(keep["pic"][:, sl])
    draws[names["pmb"]] = chains(keep["pmb"][:, sl])
    for k in range(K):
        draws[names["z"][k]] = z[:, k]
        draws[names["hc"][k]] = hc[:, k]
    if fixed_h is not None:
        for k in range(K):
            draws.pop(names["H"][k], None)
        draws.pop("H", None)

    summary = {n: Summary.of(d) for n, d in draws.items()}
    rhat, ess, warn = {}, {}, []
    if with_diagnostics and C >= 2 and draws[next(iter(draws))].shape[1] >= 100:
        rhat, ess, _ = diagnostics(draws)
        bad = [n for n, v in rhat.items() if v > RHAT_THRESHOLD]
        if bad:
            msg = f"R-hat above {RHAT_THRESHOLD} for {', '.join(bad)}; chains may not have converged"
            warn.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
    elif with_diagnostics:
        warn.append("convergence diagnostics need >= 2 chains with >= 100 retained draws")
    acceptance = {}
    for key, nm in (("pc", names["pc"]), ("H", names["H"]), ("z", names["z"])):
        for k in range(K):
            acceptance[nm[k]] = float(rates[key][sl, k].mean())
    if model != "basic":
        acceptance[names["pic"]] = float(rates["pic"][sl].mean())
    acceptance[names["pmb"]] = float(rates["pmb"][sl].mean())
    return McmcOutput(model, draws, summary, rhat, ess, config, acceptance, warn, up, tuple(labels))


def sample_posterior_batch(model: str, datasets: Sequence, priors: PriorSpec | None = None,
                           config: McmcConfig | None = None, seeds: Sequence | None = None, *,
                           up: bool = False, with_diagnostics: bool = True) -> list[McmcOutput]:
    """Run independent posteriors for several data sets in one vectorised pass.

    ``seeds[d]`` (int or SeedSequence) seeds the chains of data set ``d``;
    results are identical to calling :func:`sample_posterior` on each data set
    with the same seed.
    """
    priors = priors or PriorSpec()
    config = config or McmcConfig()
    coerced = [as_classed(_coerce(model, d)) for d in datasets]
    if seeds is None:
        seeds = np.random.SeedSequence(config.seed).spawn(len(coerced))
    chain_seeds = [_seed_sequences(s, config.chains) for s in seeds]
    sampler = _BatchSampler(model, coerced, chain_seeds, priors, config, up=up)
    keep, rates = sampler.run()
    return [
        _assemble(model, sampler, keep, rates, config, coerced[d].labels, up, None, d, with_diagnostics)
        for d in range(len(coerced))
    ]


def sample_posterior(model: str, data, priors: PriorSpec | None = None, config: McmcConfig | None = None,
                     *, fixed_h: int | None = None) -> McmcOutput:
    """Posterior draws for ``model`` ("basic", "id" or "class").

    ``fixed_h`` pins every population size at that value (no H updates), which
    reduces the sampler to the conditional posterior of the other unknowns.
    """
    priors = priors or PriorSpec()
    config = config or McmcConfig()
    classed = as_classed(_coerce(model, data))
    chain_seeds = [_seed_sequences(config.seed, config.chains)]
    sampler = _BatchSampler(model, [classed], chain_seeds, priors, config, fixed_h=fixed_h)
    keep, rates = sampler.run()
    return _assemble(model, sampler, keep, rates, config, classed.labels, False, fixed_h, 0)


def sample_posterior_up(model: str, data, priors: PriorSpec | None = None,
                        config: McmcConfig | None = None) -> McmcOutput:
    """Uncertainty-propagation variant.

    The target-population binomial is dropped from the sampler; each retained
    draw is expanded into ``H0 = h_c / p_c`` and a normal draw
    ``H ~ N(H0, H0 (1 - p_c) / p_c)``. Both ``"H"`` and ``"H0"`` are summarised.
    """
    if model not in ("id", "class"):
        raise ValueError("uncertainty propagation is defined for the 'id' and 'class' models")
    priors = priors or PriorSpec()
    config = config or McmcConfig()
    classed = as_classed(_coerce(model, data))
    chain_seeds = [_seed_sequences(config.seed, config.chains)]
    sampler = _BatchSampler(model, [classed], chain_seeds, priors, config, up=True)
    keep, rates = sampler.run()
    return _assemble(model, sampler, keep, rates, config, classed.labels, True, None, 0)
