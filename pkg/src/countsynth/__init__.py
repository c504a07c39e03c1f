"""Bayesian negative-binomial meta-regression for event-count outcomes
reported heterogeneously across studies.

The model treats per-patient event counts as negative binomial with a
study-level log-rate and log-overdispersion drawn from a two-level normal
hierarchy; covariables act linearly on the log rate.  Four reporting formats
(rate with uncertainty, total count with zero-event patients, total count
only, zero-event patients only) contribute format-specific likelihood terms,
so heterogeneously reported studies share one coherent fit.
"""

__version__ = "0.1.0"

from .data import (
    CountAndZeros,
    CountOnly,
    CovariateSet,
    Dataset,
    IngestOptions,
    PlaceboKind,
    RateWithSE,
    StudyRecord,
    Subset,
    ZerosOnly,
    descriptive_summary,
    evidence_census,
    exposure,
    ingest_csv,
    subset_filter,
    to_csv_text,
    write_csv,
)
from .kernels import BACKEND
from .mcmc import (
    McmcConfig,
    PosteriorSamples,
    PosteriorSummary,
    ess,
    rhat,
    run_chains,
    summarize,
)
from .model import (
    HierarchicalModel,
    HyperParams,
    PriorSpec,
    StudyEffects,
    aggregate_nb_params,
    log_posterior,
    log_prior,
    loglik_study,
    nb_log_pmf,
    zero_prob,
)
from .quadrature import GridAxis, quadrature_posterior
from .regression import (
    DesignMatrix,
    FitReport,
    build_design,
    correlation_screen,
    fit_model,
    pct_change,
    shrinkage_rates,
    trend_curve,
)
from .simulate import SimConfig, SimTruth, degrade_reporting, recovery_report, simulate_portfolio

__all__ = [name for name in dir() if not name.startswith("_")]
