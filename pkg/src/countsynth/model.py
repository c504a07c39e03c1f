"""Hierarchical negative-binomial model: likelihoods, priors, posterior.

Per-patient event counts over an exposure of ``delta`` years at annualized
rate ``lambda`` follow a negative binomial with mean ``delta*lambda`` and
variance ``delta*lambda*(1 + phi*delta*lambda)``; ``phi = 0`` recovers the
Poisson.  Study-level log-rates are normal around a linear predictor with
heterogeneity ``sigma_lambda``; study-level log-overdispersions are normal
around ``mu_phi`` with heterogeneity ``sigma_phi``.

Each reporting format contributes its own likelihood term:

* rate with standard error: normal on the log-rate, sd transferred by the
  delta method (``se/rate``); a linear-scale normal is available behind
  ``rate_likelihood_scale="linear"`` for sensitivity analysis,
* total count: negative binomial of the summed count (sum of n iid
  per-patient variables, i.e. mean ``n*delta*lambda``, overdispersion
  ``phi/n``),
* zero-event patients: binomial with the per-patient zero probability,
* count plus zeros: composite sum of the two terms above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .data import (
    CountAndZeros,
    CountOnly,
    Dataset,
    RateWithSE,
    StudyRecord,
    ZerosOnly,
    per_patient_exposure,
)
from .errors import DimensionMismatch, DomainError, InitFailure

DEFAULT_PHI_EPS = 1e-8


@dataclass(frozen=True)
class UniformPrior:
    lo: float
    hi: float

    def logpdf(self, x: float) -> float:
        if self.lo <= x <= self.hi:
            return -math.log(self.hi - self.lo)
        return -math.inf

    def quantile(self, p: float) -> float:
        return self.lo + p * (self.hi - self.lo)


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    sd: float

    def logpdf(self, x: float) -> float:
        return kernels.normal_logpdf(x, self.mean, self.sd)


@dataclass(frozen=True)
class HalfNormalPrior:
    scale: float

    def logpdf(self, x: float) -> float:
        return kernels.halfnormal_logpdf(x, self.scale)


def _default_beta0() -> UniformPrior:
    return UniformPrior(math.log(0.001), math.log(1000.0))


def _default_slope() -> NormalPrior:
    return NormalPrior(0.0, 10.0)


def _default_mu_phi() -> UniformPrior:
    return UniformPrior(math.log(0.0001), math.log(10000.0))


def _default_half_normal() -> HalfNormalPrior:
    return HalfNormalPrior(1.0)


@dataclass(frozen=True)
class PriorSpec:
    """The five prior components; defaults apply with zero configuration."""

    beta0: UniformPrior = field(default_factory=_default_beta0)
    beta_slope: NormalPrior = field(default_factory=_default_slope)
    sigma_lambda: HalfNormalPrior = field(default_factory=_default_half_normal)
    mu_phi: UniformPrior = field(default_factory=_default_mu_phi)
    sigma_phi: HalfNormalPrior = field(default_factory=_default_half_normal)

    def __post_init__(self):
        if not self.beta0.lo < self.beta0.hi:
            raise DomainError("beta0 prior bounds must be ordered")
        if not self.mu_phi.lo < self.mu_phi.hi:
            raise DomainError("mu_phi prior bounds must be ordered")
        if self.beta_slope.sd <= 0:
            raise DomainError("slope prior sd must be positive")
        if self.sigma_lambda.scale <= 0 or self.sigma_phi.scale <= 0:
            raise DomainError("half-normal scales must be positive")

    def as_vector(self) -> np.ndarray:
        """Flat layout consumed by the kernels; see kernels documentation."""
        return np.array([
            self.beta0.lo, self.beta0.hi,
            self.beta_slope.mean, self.beta_slope.sd,
            self.sigma_lambda.scale,
            self.mu_phi.lo, self.mu_phi.hi,
            self.sigma_phi.scale,
        ])

    def to_dict(self) -> dict:
        return {
            "beta0": {"lo": self.beta0.lo, "hi": self.beta0.hi},
            "beta_slope": {"mean": self.beta_slope.mean,
                           "sd": self.beta_slope.sd},
            "sigma_lambda": {"scale": self.sigma_lambda.scale},
            "mu_phi": {"lo": self.mu_phi.lo, "hi": self.mu_phi.hi},
            "sigma_phi": {"scale": self.sigma_phi.scale},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        base = cls()
        b0 = d.get("beta0", {})
        sl = d.get("beta_slope", {})
        sig_l = d.get("sigma_lambda", {})
        mp = d.get("mu_phi", {})
        sig_p = d.get("sigma_phi", {})
        return cls(
            beta0=UniformPrior(b0.get("lo", base.beta0.lo),
                               b0.get("hi", base.beta0.hi)),
            beta_slope=NormalPrior(sl.get("mean", base.beta_slope.mean),
                                   sl.get("sd", base.beta_slope.sd)),
            sigma_lambda=HalfNormalPrior(
                sig_l.get("scale", base.sigma_lambda.scale)),
            mu_phi=UniformPrior(mp.get("lo", base.mu_phi.lo),
                                mp.get("hi", base.mu_phi.hi)),
            sigma_phi=HalfNormalPrior(
                sig_p.get("scale", base.sigma_phi.scale)),
        )


@dataclass(frozen=True)
class HyperParams:
    beta: tuple[float, ...]
    sigma_lambda: float
    mu_phi: float
    sigma_phi: float

    def __post_init__(self):
        if self.sigma_lambda < 0 or self.sigma_phi < 0:
            raise DomainError("heterogeneity parameters must be >= 0")
        if len(self.beta) < 1:
            raise DomainError("beta must include at least the intercept")


@dataclass(frozen=True)
class StudyEffects:
    log_lambda: tuple[float, ...]
    log_phi: tuple[float, ...]

    def __post_init__(self):
        if len(self.log_lambda) != len(self.log_phi):
            raise DimensionMismatch("log_lambda and log_phi lengths differ")
        for v in self.log_lambda + self.log_phi:
            if not math.isfinite(v):
                raise DomainError("study effects must be finite")


# ---------------------------------------------------------------------------
# public probability operations (validated wrappers over the kernels)


def nb_log_pmf(y: int, mu: float, phi: float,
               phi_eps: float = DEFAULT_PHI_EPS) -> float:
    if mu <= 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if phi < 0:
        raise DomainError(f"phi must be >= 0, got {phi}")
    if y < 0 or y != int(y):
        raise DomainError(f"y must be a nonnegative integer, got {y}")
    return kernels.nb_log_pmf(float(y), mu, phi, phi_eps)


def zero_prob(delta: float, lam: float, phi: float,
              phi_eps: float = DEFAULT_PHI_EPS) -> float:
    if delta <= 0:
        raise DomainError(f"delta must be positive, got {delta}")
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if phi < 0:
        raise DomainError(f"phi must be >= 0, got {phi}")
    return kernels.zero_prob(delta, lam, phi, phi_eps)


def aggregate_nb_params(n: int, delta: float, lam: float,
                        phi: float) -> tuple[float, float]:
    """Mean and overdispersion of the summed count over n iid patients."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if delta <= 0 or lam <= 0:
        raise DomainError("delta and lambda must be positive")
    if phi < 0:
        raise DomainError(f"phi must be >= 0, got {phi}")
    return n * delta * lam, phi / n


def evidence_code(record: StudyRecord) -> tuple[int, float, float]:
    """Kernel encoding (code, a, b) of a record's outcome evidence."""
    ev = record.evidence
    if isinstance(ev, RateWithSE):
        return kernels.EV_RATE_SE, ev.rate, ev.se
    if isinstance(ev, CountAndZeros):
        return kernels.EV_COUNT_AND_ZEROS, float(ev.total_events), float(ev.zero_patients)
    if isinstance(ev, CountOnly):
        return kernels.EV_COUNT_ONLY, float(ev.total_events), 0.0
    return kernels.EV_ZEROS_ONLY, float(ev.zero_patients), 0.0


def loglik_study(record: StudyRecord, log_lambda: float, log_phi: float,
                 phi_eps: float = DEFAULT_PHI_EPS,
                 rate_likelihood_scale: str = "log",
                 exposure_basis: str = "followup") -> float:
    if not (math.isfinite(log_lambda) and math.isfinite(log_phi)):
        raise DomainError("latent effects must be finite")
    code, a, b = evidence_code(record)
    delta = per_patient_exposure(record, exposure_basis)
    linear = 1 if rate_likelihood_scale == "linear" else 0
    return kernels.study_loglik(code, a, b, float(record.n_patients), delta,
                                log_lambda, log_phi, phi_eps, linear)


def log_prior_terms(h: HyperParams, prior: PriorSpec) -> dict[str, float]:
    terms = {"beta0": prior.beta0.logpdf(h.beta[0])}
    for j, b in enumerate(h.beta[1:], start=1):
        terms[f"beta{j}"] = prior.beta_slope.logpdf(b)
    terms["sigma_lambda"] = prior.sigma_lambda.logpdf(h.sigma_lambda)
    terms["mu_phi"] = prior.mu_phi.logpdf(h.mu_phi)
    terms["sigma_phi"] = prior.sigma_phi.logpdf(h.sigma_phi)
    return terms


def log_prior(h: HyperParams, prior: PriorSpec) -> float:
    return kernels.hier_log_prior(list(h.beta), h.sigma_lambda, h.mu_phi,
                                  h.sigma_phi, prior.as_vector())


def log_posterior(h: HyperParams, effects: StudyEffects, ds: Dataset,
                  design: np.ndarray, prior: PriorSpec,
                  phi_eps: float = DEFAULT_PHI_EPS,
                  rate_likelihood_scale: str = "log",
                  exposure_basis: str = "followup") -> float:
    """Joint log-density of hyperparameters, effects, and data."""
    n = len(ds.records)
    design = np.asarray(design, dtype=float)
    if design.size == 0:
        design = design.reshape(n, -1) if n else design.reshape(0, len(h.beta))
    if design.ndim != 2 or design.shape[0] != n:
        raise DimensionMismatch(
            f"design shape {design.shape} does not align with {n} studies")
    if design.shape[1] != len(h.beta):
        raise DimensionMismatch(
            f"design has {design.shape[1]} columns for {len(h.beta)} "
            "coefficients")
    if len(effects.log_lambda) != n:
        raise DimensionMismatch(
            f"{len(effects.log_lambda)} effect pairs for {n} studies")

    model = HierarchicalModel(ds, design, prior, phi_eps=phi_eps,
                              rate_likelihood_scale=rate_likelihood_scale,
                              exposure_basis=exposure_basis)
    x = np.concatenate([
        np.asarray(h.beta, dtype=float),
        [h.sigma_lambda, h.mu_phi, h.sigma_phi],
        np.asarray(effects.log_lambda, dtype=float),
        np.asarray(effects.log_phi, dtype=float),
    ])
    return model.log_posterior(x)


# ---------------------------------------------------------------------------
# packed model driving the samplers


class HierarchicalModel:
    """Flattened view of (dataset, design, prior) for the samplers.

    Parameter vector layout: regression coefficients (``beta0``, ``beta1``,
    ...), ``sigma_lambda``, ``mu_phi``, ``sigma_phi``, then one ``log_lambda``
    and one ``log_phi`` per study, in dataset order.
    """

    def __init__(self, ds: Dataset, design: np.ndarray, prior: PriorSpec,
                 phi_eps: float = DEFAULT_PHI_EPS,
                 rate_likelihood_scale: str = "log",
                 exposure_basis: str = "followup"):
        n = len(ds.records)
        design = np.ascontiguousarray(np.asarray(design, dtype=float))
        if design.ndim != 2 or design.shape[0] != n:
            raise DimensionMismatch(
                f"design shape {design.shape} does not align with {n} studies")
        self.ds = ds
        self.design = design
        self.prior = prior
        self.phi_eps = phi_eps
        self.rate_likelihood_scale = rate_likelihood_scale
        self.linear_rate = 1 if rate_likelihood_scale == "linear" else 0
        self.exposure_basis = exposure_basis

        codes, evs_a, evs_b = [], [], []
        for r in ds.records:
            c, a, b = evidence_code(r)
            codes.append(c)
            evs_a.append(a)
            evs_b.append(b)
        self.ev_code = np.asarray(codes, dtype=np.int32)
        self.ev_a = np.asarray(evs_a, dtype=float)
        self.ev_b = np.asarray(evs_b, dtype=float)
        self.n_pat = np.asarray([float(r.n_patients) for r in ds.records])
        self.delta = np.asarray(
            [per_patient_exposure(r, exposure_basis) for r in ds.records])
        self.prior_vec = prior.as_vector()

        self.n_studies = n
        self.n_coef = design.shape[1]
        self.dim = self.n_coef + 3 + 2 * n
        names = [f"beta{j}" for j in range(self.n_coef)]
        names += ["sigma_lambda", "mu_phi", "sigma_phi"]
        names += [f"log_lambda[{r.study_id}]" for r in ds.records]
        names += [f"log_phi[{r.study_id}]" for r in ds.records]
        self.param_names = names
        self.hyper_names = names[: self.n_coef + 3]

    def log_posterior(self, x: Sequence[float]) -> float:
        return kernels.hier_log_posterior(
            np.asarray(x, dtype=float), self.design, self.ev_code, self.ev_a,
            self.ev_b, self.n_pat, self.delta, self.prior_vec, self.phi_eps,
            self.linear_rate)

    def draw_initial(self, rng: np.random.Generator,
                     max_tries: int = 100) -> np.ndarray:
        """Hyperparameters from their priors, effects at conditional means.

        Uses only ``rng.random()`` uniforms (normals via Box-Muller) so the
        consumed stream is backend-independent.
        """
        pv = self.prior_vec
        for _ in range(max_tries):
            beta = np.empty(self.n_coef)
            beta[0] = pv[0] + rng.random() * (pv[1] - pv[0])
            for j in range(1, self.n_coef):
                beta[j] = pv[2] + pv[3] * kernels.draw_normal(rng)
            sig_lam = abs(kernels.draw_normal(rng)) * pv[4]
            mu_phi = pv[5] + rng.random() * (pv[6] - pv[5])
            sig_phi = abs(kernels.draw_normal(rng)) * pv[7]
            eta = self.design @ beta if self.n_studies else np.empty(0)
            x = np.concatenate([
                beta, [sig_lam, mu_phi, sig_phi],
                eta, np.full(self.n_studies, mu_phi),
            ])
            if math.isfinite(self.log_posterior(x)):
                return x
        raise InitFailure(
            f"no finite starting point after {max_tries} prior draws")

    def unpack(self, x: np.ndarray) -> tuple[HyperParams, StudyEffects]:
        p, n = self.n_coef, self.n_studies
        return (
            HyperParams(beta=tuple(float(v) for v in x[:p]),
                        sigma_lambda=float(x[p]), mu_phi=float(x[p + 1]),
                        sigma_phi=float(x[p + 2])),
            StudyEffects(
                log_lambda=tuple(float(v) for v in x[p + 3: p + 3 + n]),
                log_phi=tuple(float(v) for v in x[p + 3 + n:])),
        )

    def sample_chain(self, rng: np.random.Generator, n_adapt: int,
                     n_samples: int, thin: int, target_accept: float):
        """Run one chain; returns (draws, accept_rates, frozen_scales).

        Raises nothing itself; a NaN status is reported by the caller with
        the chain context attached.
        """
        x0 = self.draw_initial(rng)
        n_kept = n_samples // thin
        draws = np.empty((n_kept, self.dim))
        accept = np.empty(self.dim)
        scales = np.empty(self.dim)
        log_scales0 = np.full(self.dim, math.log(0.5))
        status = kernels.run_chain_kernel(
            rng, self.design, self.ev_code, self.ev_a, self.ev_b, self.n_pat,
            self.delta, self.prior_vec, self.phi_eps, self.linear_rate,
            x0, log_scales0, n_adapt, n_samples, thin, target_accept,
            draws, accept, scales)
        return status, draws, accept, scales
