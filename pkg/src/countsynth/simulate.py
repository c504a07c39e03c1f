"""Synthetic study portfolios drawn from the generative model.

Per-study effects come from the hierarchy, per-patient counts from the
Gamma-Poisson mixture (Gamma shape ``1/phi``, mean ``delta*lambda``), and the
resulting truth is then *degraded* into one of the four reporting formats.
Simulation uses numpy's own distributions, so simulator and likelihood
kernels validate each other.

Every study draws from its own spawned seed stream: portfolios are
reproducible per seed and a study's data do not depend on how many other
studies are simulated.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (
    CountAndZeros,
    CountOnly,
    CovariateSet,
    Dataset,
    PlaceboKind,
    Provenance,
    RateWithSE,
    StudyRecord,
    ZerosOnly,
)
from .model import DEFAULT_PHI_EPS, HyperParams

FORMAT_NAMES = ("rate+se", "count+zeros", "count", "zeros")


def _default_truth() -> HyperParams:
    # Illustrative defaults: a gently declining rate trend with moderate
    # heterogeneity on both the rate and the overdispersion.
    return HyperParams(beta=(0.434, -0.07), sigma_lambda=0.41,
                       mu_phi=-0.09, sigma_phi=0.71)


@dataclass(frozen=True)
class SimConfig:
    n_studies: int = 55
    truth: HyperParams = field(default_factory=_default_truth)
    year_range: tuple[int, int] = (1996, 2017)
    year_offset: float = 2000.0
    # patients per study: round(lognormal), clipped to patients_range
    patients_log_mean: float = math.log(200.0)
    patients_log_sd: float = 0.6
    patients_range: tuple[int, int] = (40, 1500)
    followup_range: tuple[float, float] = (0.2, 0.9)
    true_placebo_prob: float = 0.4
    # exactly one of format_counts / format_mix applies; counts win
    format_counts: Optional[tuple[int, int, int, int]] = None
    format_mix: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    seed: int = 0

    def __post_init__(self):
        if self.n_studies < 1:
            raise ValueError("n_studies must be >= 1")
        if self.year_range[0] > self.year_range[1]:
            raise ValueError("year_range is empty")
        if self.followup_range[0] <= 0 or \
                self.followup_range[0] > self.followup_range[1]:
            raise ValueError("followup_range must be positive and ordered")
        if self.format_counts is not None:
            if sum(self.format_counts) != self.n_studies:
                raise ValueError("format_counts must sum to n_studies")
        else:
            if abs(sum(self.format_mix) - 1.0) > 1e-9:
                raise ValueError("format_mix must sum to 1")
        if len(self.truth.beta) != 2:
            raise ValueError("simulation truth uses (intercept, year slope)")


@dataclass(frozen=True)
class SimStudyTruth:
    study_id: str
    year: int
    n_patients: int
    followup_years: float
    placebo_kind: PlaceboKind
    log_lambda: float
    log_phi: float
    counts: np.ndarray  # per-patient event counts

    @property
    def rate(self) -> float:
        return math.exp(self.log_lambda)

    @property
    def phi(self) -> float:
        return math.exp(self.log_phi)


@dataclass(frozen=True)
class SimTruth:
    studies: tuple[SimStudyTruth, ...]
    formats: tuple[int, ...]  # assigned reporting format per study


def _format_assignment(cfg: SimConfig, study_rngs) -> list[int]:
    if cfg.format_counts is not None:
        out = []
        for code, count in enumerate(cfg.format_counts):
            out.extend([code] * count)
        return out
    cum = np.cumsum(cfg.format_mix)
    out = []
    for rng in study_rngs:
        u = rng.random()
        out.append(int(np.searchsorted(cum, u, side="right").clip(0, 3)))
    return out


def simulate_portfolio(cfg: SimConfig,
                       phi_eps: float = DEFAULT_PHI_EPS) -> tuple[Dataset, SimTruth]:
    """Draw a synthetic portfolio and its degraded study table."""
    root = np.random.SeedSequence(cfg.seed)
    seqs = root.spawn(cfg.n_studies)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seqs]
    formats = _format_assignment(cfg, rngs)

    b0, b1 = cfg.truth.beta
    studies = []
    for i, rng in enumerate(rngs):
        year = int(rng.integers(cfg.year_range[0], cfg.year_range[1] + 1))
        n = int(np.clip(round(rng.lognormal(cfg.patients_log_mean,
                                            cfg.patients_log_sd)),
                        cfg.patients_range[0], cfg.patients_range[1]))
        followup = float(rng.uniform(*cfg.followup_range))
        kind = (PlaceboKind.TRUE if rng.random() < cfg.true_placebo_prob
                else PlaceboKind.ICS)
        eta = b0 + b1 * (year - cfg.year_offset)
        log_lambda = eta + cfg.truth.sigma_lambda * rng.standard_normal()
        log_phi = cfg.truth.mu_phi + cfg.truth.sigma_phi * rng.standard_normal()
        lam = math.exp(log_lambda)
        phi = math.exp(log_phi)
        mean_count = followup * lam
        if phi < phi_eps:
            counts = rng.poisson(mean_count, size=n)
        else:
            gammas = rng.gamma(shape=1.0 / phi, scale=phi * mean_count, size=n)
            counts = rng.poisson(gammas)
        studies.append(SimStudyTruth(
            study_id=f"sim{i:03d}", year=year, n_patients=n,
            followup_years=followup, placebo_kind=kind,
            log_lambda=log_lambda, log_phi=log_phi,
            counts=np.asarray(counts, dtype=np.int64)))

    truth = SimTruth(studies=tuple(studies), formats=tuple(formats))
    return degrade_reporting(truth), truth


def degrade_reporting(truth: SimTruth,
                      formats: Sequence[int] | None = None) -> Dataset:
    """Project per-patient truth onto the assigned reporting formats.

    Formats: 0 rate+se, 1 count+zeros, 2 count only, 3 zeros only.  A
    rate+se study with zero total events cannot report a positive rate and
    falls back to a total count of zero.
    """
    if formats is None:
        formats = truth.formats
    if len(formats) != len(truth.studies):
        raise ValueError("one format per study required")
    records = []
    for st, fmt in zip(truth.studies, formats):
        n = st.n_patients
        delta = st.followup_years
        total = int(st.counts.sum())
        zeros = int(np.count_nonzero(st.counts == 0))
        if fmt == 0 and total > 0:
            rate = total / (n * delta)
            se = math.sqrt(n * delta * rate * (1.0 + st.phi * delta * rate)) \
                / (n * delta)
            evidence = RateWithSE(rate=rate, se=se)
        elif fmt == 0:
            evidence = CountOnly(total_events=0)
        elif fmt == 1:
            evidence = CountAndZeros(total_events=total, zero_patients=zeros)
        elif fmt == 2:
            evidence = CountOnly(total_events=total)
        elif fmt == 3:
            evidence = ZerosOnly(zero_patients=zeros)
        else:
            raise ValueError(f"unknown format code {fmt}")
        records.append(StudyRecord(
            study_id=st.study_id, publication_year=st.year, n_patients=n,
            study_duration_years=delta, mean_followup_years=delta,
            placebo_kind=st.placebo_kind, evidence=evidence,
            covariables=CovariateSet(), quality_score=None))
    return Dataset(records=tuple(records),
                   provenance=Provenance(source="<simulated>", ingested_at=""))


@dataclass(frozen=True)
class ParamRecovery:
    name: str
    truth: float
    covered: int
    n_replicates: int
    mean_bias: float

    @property
    def coverage(self) -> float:
        return self.covered / self.n_replicates


@dataclass(frozen=True)
class RecoveryReport:
    rows: tuple[ParamRecovery, ...]

    def row(self, name: str) -> ParamRecovery:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def recovery_report(n_replicates: int, cfg: SimConfig, mcmc_config,
                    prior=None) -> RecoveryReport:
    """Coverage and bias of the hyperparameter posteriors over replicated
    simulate-fit cycles (year-only model)."""
    from .mcmc import summarize
    from .regression import fit_model

    if n_replicates < 10:
        raise ValueError("use at least 10 replicates")
    truths = {
        "beta0": cfg.truth.beta[0],
        "beta1": cfg.truth.beta[1],
        "sigma_lambda": cfg.truth.sigma_lambda,
        "mu_phi": cfg.truth.mu_phi,
        "sigma_phi": cfg.truth.sigma_phi,
    }
    covered = {k: 0 for k in truths}
    bias = {k: 0.0 for k in truths}
    rep_seeds = np.random.SeedSequence(cfg.seed).generate_state(n_replicates)
    for r in range(n_replicates):
        sim_cfg = dataclasses.replace(cfg, seed=int(rep_seeds[r]))
        ds, _ = simulate_portfolio(sim_cfg)
        mc = dataclasses.replace(mcmc_config, seed=int(rep_seeds[r]) ^ 0x5EED)
        report = fit_model(ds, covariables=["year"], mcmc_config=mc,
                           prior=prior, force=True)
        for name, true_val in truths.items():
            s = report.params[name]
            if s.ci_low <= true_val <= s.ci_high:
                covered[name] += 1
            bias[name] += s.median - true_val
    rows = tuple(
        ParamRecovery(name=k, truth=truths[k], covered=covered[k],
                      n_replicates=n_replicates,
                      mean_bias=bias[k] / n_replicates)
        for k in truths)
    return RecoveryReport(rows=rows)
