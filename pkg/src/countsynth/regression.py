"""Meta-regression layer: designs, fits, and derived quantities.

``fit_model`` wires together subsetting, design construction, MCMC, and
summaries into a :class:`FitReport`, the object behind the parameter,
shrinkage, and trend tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .data import (
    Dataset,
    EVIDENCE_LABELS,
    Subset,
    select_records,
    subset_filter,
)
from .errors import (
    ConvergenceFailure,
    CovariableMismatch,
    NoStudiesLeft,
    TooFewStudies,
)
from .mcmc import (
    McmcConfig,
    PosteriorSamples,
    PosteriorSummary,
    quantile,
    run_chains,
    summarize,
)
from .model import HierarchicalModel, PriorSpec

COVARIABLES = ("year", "sgrq", "fev1", "smokers_pct", "pack_years",
               "male_pct", "mean_age")

DISPLAY_NAMES = {
    "year": "publication year",
    "sgrq": "SGRQ score",
    "fev1": "FEV1 (% predicted)",
    "smokers_pct": "smokers (%)",
    "pack_years": "pack-years",
    "male_pct": "males (%)",
    "mean_age": "mean age",
}

DEFAULT_YEAR_OFFSET = 2000.0


@dataclass(frozen=True)
class DesignMatrix:
    covariables: tuple[str, ...]
    matrix: np.ndarray  # (n_included, 1 + n_covariables), intercept first
    centering: dict[str, float]
    included_index: tuple[int, ...]
    included_ids: tuple[str, ...]
    excluded_ids: tuple[str, ...]

    @property
    def n_coef(self) -> int:
        return self.matrix.shape[1]


def _covariable_value(record, name: str, centering: dict[str, float]):
    if name == "year":
        return float(record.publication_year) - centering["year"]
    return record.covariables.get(name)


def build_design(ds: Dataset, covariables: Sequence[str],
                 year_offset: float = DEFAULT_YEAR_OFFSET) -> DesignMatrix:
    """Design matrix with an intercept column and the requested covariables.

    Publication year enters centered at ``year_offset``; other covariables
    enter on their reported scale.  Studies missing any requested covariable
    are excluded and listed.
    """
    covariables = list(covariables)
    for name in covariables:
        if name not in COVARIABLES:
            raise CovariableMismatch(
                f"unknown covariable {name!r}; expected one of "
                f"{', '.join(COVARIABLES)}")
    if len(set(covariables)) != len(covariables):
        raise CovariableMismatch("duplicate covariable requested")

    centering = {"year": year_offset}
    included, excluded, rows = [], [], []
    for idx, rec in enumerate(ds.records):
        values = [_covariable_value(rec, c, centering) for c in covariables]
        if any(v is None for v in values):
            excluded.append(rec.study_id)
            continue
        included.append(idx)
        rows.append([1.0] + [float(v) for v in values])

    if not included:
        raise NoStudiesLeft(
            "no studies report every requested covariable: "
            + ", ".join(covariables))
    matrix = np.asarray(rows, dtype=float)
    return DesignMatrix(
        covariables=tuple(covariables), matrix=matrix,
        centering={k: v for k, v in centering.items() if k in covariables or k == "year"},
        included_index=tuple(included),
        included_ids=tuple(ds.records[i].study_id for i in included),
        excluded_ids=tuple(excluded))


@dataclass(frozen=True)
class PctChange:
    """Percentage change implied by a log-scale coefficient over a horizon."""
    covariable: str
    horizon: float
    summary: PosteriorSummary


@dataclass(frozen=True)
class ShrinkageRow:
    study_id: str
    year: int
    median: float
    ci_low: float
    ci_high: float
    evidence_format: str


@dataclass(frozen=True)
class TrendPoint:
    year: float
    median: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class Diagnostics:
    max_rhat: float
    min_ess: float
    flagged: tuple[str, ...]


@dataclass(frozen=True)
class FitReport:
    label: str
    subset: str
    covariables: tuple[str, ...]
    n_included: int
    excluded_ids: tuple[str, ...]
    params: dict[str, PosteriorSummary]
    coef_covariables: dict[str, str]  # beta1 -> covariable name
    pct_changes: dict[str, tuple[PctChange, ...]]
    shrinkage: tuple[ShrinkageRow, ...]
    trend: Optional[tuple[TrendPoint, ...]]
    diagnostics: Diagnostics
    mcmc_config: McmcConfig
    prior: PriorSpec
    backend: str
    year_offset: float
    samples: PosteriorSamples = field(repr=False, compare=False, default=None)


def pct_change(draws: np.ndarray, horizon: float,
               tail_prob: bool = True) -> PosteriorSummary:
    """Summary of ``100 * (exp(coef * horizon) - 1)`` over the draws.

    The transform is monotone, so the interval equals the transformed
    interval of the raw coefficient.
    """
    if not math.isfinite(horizon):
        raise ValueError("horizon must be finite")
    transformed = 100.0 * np.expm1(np.asarray(draws, dtype=float) * horizon)
    return summarize(transformed, tail_prob=tail_prob)


def shrinkage_rates(samples: PosteriorSamples, ds: Dataset) -> tuple[ShrinkageRow, ...]:
    """Per-study annualized rate summaries from the latent log-rates,
    ordered by publication year then study id."""
    rows = []
    for rec in ds.records:
        draws = np.exp(samples.draws_for(f"log_lambda[{rec.study_id}]"))
        lo, med, hi = quantile(draws.reshape(-1), [0.025, 0.5, 0.975])
        rows.append(ShrinkageRow(
            study_id=rec.study_id, year=rec.publication_year,
            median=float(med), ci_low=float(lo), ci_high=float(hi),
            evidence_format=EVIDENCE_LABELS[type(rec.evidence)]))
    rows.sort(key=lambda r: (r.year, r.study_id))
    return tuple(rows)


def trend_curve(samples: PosteriorSamples, years: Sequence[float],
                design: DesignMatrix) -> tuple[TrendPoint, ...]:
    """Posterior rate curve over calendar years for the year-only model."""
    if tuple(design.covariables) != ("year",):
        raise CovariableMismatch(
            "the trend curve is defined for the year-only model; got "
            f"covariables {design.covariables!r}")
    b0 = samples.flat("beta0")
    b1 = samples.flat("beta1")
    offset = design.centering["year"]
    points = []
    for y in years:
        rate = np.exp(b0 + b1 * (float(y) - offset))
        lo, med, hi = quantile(rate, [0.025, 0.5, 0.975])
        points.append(TrendPoint(year=float(y), median=float(med),
                                 ci_low=float(lo), ci_high=float(hi)))
    return tuple(points)


@dataclass(frozen=True)
class ScreenResult:
    covariable: str
    n: int
    r: float
    ci_low: float
    ci_high: float
    p_value: float


def correlation_screen(ds: Dataset, covariable: str) -> ScreenResult:
    """Pearson correlation of a covariable with publication year.

    The interval uses the Fisher z transform (±1.96/sqrt(n-3)); the two-sided
    p-value comes from t = r*sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom.
    """
    if covariable not in COVARIABLES:
        raise CovariableMismatch(f"unknown covariable {covariable!r}")
    pairs = []
    for rec in ds.records:
        v = (float(rec.publication_year) if covariable == "year"
             else rec.covariables.get(covariable))
        if v is not None:
            pairs.append((float(rec.publication_year), float(v)))
    n = len(pairs)
    if n < 4:
        raise TooFewStudies(
            f"correlation screen needs >= 4 studies reporting "
            f"{covariable!r}, found {n}")
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float(xd @ xd) * float(yd @ yd))
    if denom == 0.0:
        raise TooFewStudies("covariable or year has zero variance")
    r = float(xd @ yd) / denom
    r = max(-1.0, min(1.0, r))

    if abs(r) >= 1.0:
        return ScreenResult(covariable, n, r, r, r, 0.0)
    z = math.atanh(r)
    half = 1.96 / math.sqrt(n - 3)
    ci_low = math.tanh(z - half)
    ci_high = math.tanh(z + half)
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    # two-sided p via the regularized incomplete beta
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t2)))
    return ScreenResult(covariable, n, r, ci_low, ci_high, p)


def _fit_label(subset: Subset, covariables: Sequence[str], n: int) -> str:
    extra = [c for c in covariables if c != "year"]
    if subset is Subset.TRUE_PLACEBO:
        base = "True placebos"
    elif subset is Subset.ICS_PLACEBO:
        base = "ICS-placebos"
    else:
        base = "All studies"
    if extra:
        pretty = {"sgrq": "SGRQ", "fev1": "FEV1"}
        adj = " and ".join(pretty.get(c, DISPLAY_NAMES[c]) for c in extra)
        if subset is Subset.ALL:
            return f"Adjusting for {adj} ({n} studies)"
        return f"{base}, adjusting for {adj} ({n} studies)"
    return f"{base} ({n} studies)"


def fit_model(ds: Dataset, covariables: Sequence[str] = ("year",),
              subset: Subset | str = Subset.ALL,
              prior: PriorSpec | None = None,
              mcmc_config: McmcConfig | None = None,
              year_offset: float = DEFAULT_YEAR_OFFSET,
              exposure_basis: str = "followup",
              rate_likelihood_scale: str = "log",
              trend_years: Sequence[float] | None = None,
              force: bool = False,
              label: str | None = None) -> FitReport:
    """Fit the hierarchical model and assemble the full report.

    Raises :class:`ConvergenceFailure` when any hyperparameter exceeds the
    R-hat threshold and ``force`` is not set.
    """
    prior = prior or PriorSpec()
    mcmc_config = mcmc_config or McmcConfig()
    subset = Subset(subset)

    ds_sub = subset_filter(ds, subset)
    if not ds_sub.records:
        raise NoStudiesLeft(f"subset {subset.value!r} is empty")
    design = build_design(ds_sub, covariables, year_offset=year_offset)
    ds_fit = select_records(ds_sub, design.included_index)

    hmodel = HierarchicalModel(
        ds_fit, design.matrix, prior,
        rate_likelihood_scale=rate_likelihood_scale,
        exposure_basis=exposure_basis)
    samples = run_chains(hmodel, mcmc_config)

    params: dict[str, PosteriorSummary] = {}
    coef_cov: dict[str, str] = {}
    for j in range(design.n_coef):
        name = f"beta{j}"
        params[name] = summarize(samples, name, tail_prob=(j > 0))
        coef_cov[name] = "intercept" if j == 0 else design.covariables[j - 1]
    for name in ("sigma_lambda", "mu_phi", "sigma_phi"):
        params[name] = summarize(samples, name)

    flagged = tuple(n for n in hmodel.hyper_names
                    if params[n].rhat > mcmc_config.rhat_threshold)
    diags = Diagnostics(
        max_rhat=max(params[n].rhat for n in hmodel.hyper_names),
        min_ess=min(params[n].ess for n in hmodel.hyper_names),
        flagged=flagged)
    if flagged and not force:
        raise ConvergenceFailure(
            "convergence gate failed (R-hat > "
            f"{mcmc_config.rhat_threshold}) for: {', '.join(flagged)}",
            flagged=flagged)

    pct: dict[str, tuple[PctChange, ...]] = {}
    for j in range(1, design.n_coef):
        name = f"beta{j}"
        cov = design.covariables[j - 1]
        draws = samples.draws_for(name)
        entries = [PctChange(cov, 1.0, pct_change(draws, 1.0))]
        if cov == "year":
            entries.append(PctChange(cov, 10.0, pct_change(draws, 10.0)))
        pct[name] = tuple(entries)

    shrink = shrinkage_rates(samples, ds_fit)

    trend = None
    if tuple(design.covariables) == ("year",):
        if trend_years is None:
            years = sorted({r.publication_year for r in ds_fit.records})
            trend_years = list(range(int(min(years)) - 1,
                                     int(max(years)) + 2))
        trend = trend_curve(samples, trend_years, design)

    report = FitReport(
        label=label or _fit_label(subset, design.covariables,
                                  len(ds_fit.records)),
        subset=subset.value,
        covariables=design.covariables,
        n_included=len(ds_fit.records),
        excluded_ids=design.excluded_ids,
        params=params,
        coef_covariables=coef_cov,
        pct_changes=pct,
        shrinkage=shrink,
        trend=trend,
        diagnostics=diags,
        mcmc_config=mcmc_config,
        prior=prior,
        backend=samples.backend,
        year_offset=year_offset,
        samples=samples,
    )
    return report
