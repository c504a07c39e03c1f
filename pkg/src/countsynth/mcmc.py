"""Adaptive Metropolis-within-Gibbs engine with multi-chain diagnostics.

Chains are fully reproducible: the run seed feeds a ``SeedSequence`` whose
spawned children seed one PCG64 generator per chain, so concurrent and
sequential execution produce identical draws.  Proposal scales adapt toward
a target acceptance rate during burn-in (Robbins-Monro on the log scale) and
are frozen afterwards; only post-adaptation draws are stored.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InsufficientDraws, NumericalError

DEFAULT_SEED = 20190816


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 4
    n_adapt: int = 5000
    n_samples: int = 20000
    thin: int = 1
    seed: int = DEFAULT_SEED
    target_accept: float = 0.44
    rhat_threshold: float = 1.05
    n_workers: int = 1

    def __post_init__(self):
        if self.n_chains < 2:
            raise ValueError("n_chains must be >= 2 (diagnostics need them)")
        if self.n_adapt < 0 or self.n_samples <= 0:
            raise ValueError("n_adapt must be >= 0 and n_samples positive")
        if self.thin < 1 or self.n_samples % self.thin:
            raise ValueError("thin must be >= 1 and divide n_samples")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "n_chains": self.n_chains, "n_adapt": self.n_adapt,
            "n_samples": self.n_samples, "thin": self.thin,
            "seed": self.seed, "target_accept": self.target_accept,
            "rhat_threshold": self.rhat_threshold,
            "n_workers": self.n_workers,
        }


@dataclass(frozen=True)
class PosteriorSummary:
    median: float
    ci_low: float
    ci_high: float
    rhat: float
    ess: float
    p_b: Optional[float] = None
    p_b_is_bound: bool = False  # True when one tail was empty: report "< p_b"

    def p_b_text(self) -> str:
        if self.p_b is None:
            return ""
        value = np.format_float_positional(self.p_b, trim="-")
        return f"< {value}" if self.p_b_is_bound else value


class PosteriorSamples:
    """Named draws from all chains plus sampler bookkeeping."""

    def __init__(self, names: Sequence[str], draws: np.ndarray,
                 accept_rates: np.ndarray, proposal_scales: np.ndarray,
                 config: McmcConfig, backend: str):
        if draws.ndim != 3 or draws.shape[2] != len(names):
            raise ValueError("draws must have shape (chains, kept, params)")
        self.names = list(names)
        self.draws = draws
        self.accept_rates = accept_rates
        self.proposal_scales = proposal_scales
        self.config = config
        self.backend = backend
        self._index = {name: j for j, name in enumerate(self.names)}

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_kept(self) -> int:
        return self.draws.shape[1]

    def draws_for(self, name: str) -> np.ndarray:
        """Draw matrix (chains x kept iterations) for one parameter."""
        return self.draws[:, :, self._index[name]]

    def flat(self, name: str) -> np.ndarray:
        return self.draws_for(name).reshape(-1)

    def to_long_csv(self, path: str | Path, comment: str | None = None) -> None:
        """Long-format export: chain, iteration, parameter, value."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain", "iteration", "parameter", "value"])
            for c in range(self.n_chains):
                for k in range(self.n_kept):
                    row = self.draws[c, k]
                    for j, name in enumerate(self.names):
                        writer.writerow([c, k + 1, name, repr(float(row[j]))])


def chain_seed_sequences(seed: int, n_chains: int) -> list[np.random.SeedSequence]:
    """Per-chain seed derivation: children of SeedSequence(seed), in order."""
    return np.random.SeedSequence(seed).spawn(n_chains)


def run_chains(model, config: McmcConfig) -> PosteriorSamples:
    """Run ``config.n_chains`` independent chains of ``model``.

    ``model`` provides ``param_names`` and
    ``sample_chain(rng, n_adapt, n_samples, thin, target_accept)``.
    """
    seqs = chain_seed_sequences(config.seed, config.n_chains)

    def one(idx: int):
        rng = np.random.Generator(np.random.PCG64(seqs[idx]))
        return model.sample_chain(rng, config.n_adapt, config.n_samples,
                                  config.thin, config.target_accept)

    if config.n_workers > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            results = list(pool.map(one, range(config.n_chains)))
    else:
        results = [one(i) for i in range(config.n_chains)]

    dim = len(model.param_names)
    n_kept = config.n_samples // config.thin
    draws = np.empty((config.n_chains, n_kept, dim))
    accept = np.empty((config.n_chains, dim))
    scales = np.empty((config.n_chains, dim))
    for c, (status, d, a, s) in enumerate(results):
        code, it, coord = status
        if code != 0:
            raise NumericalError(
                f"log-posterior became NaN in chain {c} at iteration {it}, "
                f"coordinate {model.param_names[coord]}",
                state={"chain": c, "iteration": it,
                       "coordinate": model.param_names[coord],
                       "seed": config.seed})
        draws[c] = d
        accept[c] = a
        scales[c] = s

    from .kernels import BACKEND
    return PosteriorSamples(model.param_names, draws, accept, scales,
                            config, BACKEND)


class GenericModel:
    """Small model sampled by plain componentwise random-walk Metropolis.

    Used for reduced models where the log-posterior is a cheap callable;
    every coordinate update re-evaluates the full density.
    """

    def __init__(self, names: Sequence[str],
                 log_posterior: Callable[[np.ndarray], float],
                 initial: Sequence[float], init_jitter: float = 0.1):
        self.param_names = list(names)
        self.log_posterior = log_posterior
        self.initial = np.asarray(initial, dtype=float)
        self.init_jitter = init_jitter
        if self.initial.shape != (len(self.param_names),):
            raise ValueError("initial point does not match parameter names")

    def sample_chain(self, rng, n_adapt, n_samples, thin, target_accept):
        from .kernels import _pure

        dim = len(self.param_names)
        x = self.initial.copy()
        for j in range(dim):
            x[j] += self.init_jitter * _pure._draw_normal(rng)
        lp = self.log_posterior(x)
        if not math.isfinite(lp):
            x = self.initial.copy()
            lp = self.log_posterior(x)

        ls = np.full(dim, math.log(0.5))
        n_kept = n_samples // thin
        draws = np.empty((n_kept, dim))
        n_acc = np.zeros(dim)
        total = n_adapt + n_samples
        for it in range(1, total + 1):
            adapting = it <= n_adapt
            gamma = it ** -0.6 if adapting else 0.0
            for j in range(dim):
                z = _pure._draw_normal(rng)
                u = rng.random()
                old = x[j]
                x[j] = old + math.exp(ls[j]) * z
                lp_new = self.log_posterior(x)
                dlp = lp_new - lp
                if math.isnan(dlp):
                    return (1, it, j), draws, n_acc, np.exp(ls)
                if dlp >= 0.0:
                    alpha = 1.0
                    accepted = True
                else:
                    alpha = math.exp(dlp)
                    accepted = u < alpha
                if accepted:
                    lp = lp_new
                    if not adapting:
                        n_acc[j] += 1
                else:
                    x[j] = old
                if adapting:
                    ls[j] = min(5.0, max(-15.0, ls[j] + gamma * (alpha - target_accept)))
            if not adapting:
                k = it - n_adapt
                if k % thin == 0:
                    draws[k // thin - 1] = x
        return (0, 0, 0), draws, n_acc / max(n_samples, 1), np.exp(ls)


# ---------------------------------------------------------------------------
# diagnostics


def _split_chains(chains: np.ndarray) -> np.ndarray:
    m, n = chains.shape
    if m < 2 or n < 100:
        raise InsufficientDraws(
            f"diagnostics need >= 2 chains of >= 100 draws, got {m} x {n}")
    half = n // 2
    return np.vstack([chains[:, :half], chains[:, half: 2 * half]])


def rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    ``chains`` has shape (n_chains, n_draws).
    """
    sp = _split_chains(np.asarray(chains, dtype=float))
    m, n = sp.shape
    means = sp.mean(axis=1)
    w = sp.var(axis=1, ddof=1).mean()
    b_over_n = means.var(ddof=1)
    if w == 0.0:
        return 1.0 if b_over_n == 0.0 else math.inf
    var_plus = (n - 1) / n * w + b_over_n
    return math.sqrt(var_plus / w)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = len(x)
    d = x - x.mean()
    f = np.fft.rfft(d, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n]
    return acov / n


def ess(chains: np.ndarray) -> float:
    """Effective sample size from pooled autocorrelations (split chains,
    paired-sum truncation with a monotone envelope)."""
    sp = _split_chains(np.asarray(chains, dtype=float))
    m, n = sp.shape
    acov = np.vstack([_autocov(sp[c]) for c in range(m)])
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = chain_var.mean()
    if mean_var == 0.0:
        return float(m * n)
    var_plus = mean_var * (n - 1) / n + sp.mean(axis=1).var(ddof=1)
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus

    tau = 0.0
    rho0 = rho[0]
    prev = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0.0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += pair
        t += 2
    tau = 2.0 * tau - rho0
    tau = max(tau, 1.0 / (m * n))
    return float(min(m * n, m * n / tau))


def quantile(draws: np.ndarray, p) -> np.ndarray:
    """Empirical quantile with linear interpolation between order statistics
    (type-7), the convention used for every interval in this package."""
    return np.quantile(draws, p, method="linear")


def tail_probability(draws: np.ndarray) -> tuple[float, bool]:
    """Two-sided posterior tail probability of a coefficient.

    ``2 * min(P(draw <= 0), P(draw >= 0))``; when one tail is empty the
    resolution bound ``2/N`` is returned with the bound flag set.
    """
    flat = np.asarray(draws).reshape(-1)
    n = flat.size
    frac_le = float(np.count_nonzero(flat <= 0.0)) / n
    frac_ge = float(np.count_nonzero(flat >= 0.0)) / n
    p = 2.0 * min(frac_le, frac_ge)
    if p == 0.0:
        return 2.0 / n, True
    return min(p, 1.0), False


def summarize(samples: PosteriorSamples | np.ndarray,
              param: str | None = None,
              tail_prob: bool = False) -> PosteriorSummary:
    """Median, central 95% interval, and diagnostics for one parameter.

    ``tail_prob`` should be set only for regression coefficients.
    """
    if isinstance(samples, PosteriorSamples):
        chains = samples.draws_for(param)
    else:
        chains = np.asarray(samples, dtype=float)
    if chains.size == 0:
        raise InsufficientDraws("no draws to summarize")
    lo, med, hi = quantile(chains.reshape(-1), [0.025, 0.5, 0.975])
    pb, bound = (None, False)
    if tail_prob:
        pb, bound = tail_probability(chains)
    return PosteriorSummary(
        median=float(med), ci_low=float(lo), ci_high=float(hi),
        rhat=rhat(chains), ess=ess(chains), p_b=pb, p_b_is_bound=bound)
