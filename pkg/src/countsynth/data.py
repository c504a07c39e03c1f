"""Study-level data model, CSV ingestion, and descriptive summaries.

The input table has one row per study placebo arm.  Event evidence may be
reported in four shapes (rate with uncertainty; total count with zero-event
patients; total count only; zero-event patients only) and the ingester maps
each row onto exactly one of them, rejecting ambiguous or contradictory rows.
"""

from __future__ import annotations

import csv
import datetime
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import (
    BadNumeric,
    ConflictingEvidence,
    EmptySubsetWarning,
    InvariantViolation,
    MissingColumn,
)

COLUMNS = (
    "study_id", "year", "n_patients", "duration_yr", "mean_followup_yr",
    "placebo_type", "rate", "rate_se", "rate_ci_lo", "rate_ci_hi",
    "total_events", "zero_patients", "zero_proportion",
    "sgrq", "fev1_pct", "smokers_pct", "pack_years", "male_pct", "mean_age",
    "oxford_score",
)

COVARIATE_FIELDS = ("sgrq", "fev1", "smokers_pct", "pack_years", "male_pct",
                    "mean_age")

# Normal quantile used when a reported confidence interval is converted to a
# standard error: se = (hi - lo) / (2 * 1.96).
CI_Z = 1.96


class PlaceboKind(str, Enum):
    TRUE = "true"
    ICS = "ics"


class Subset(str, Enum):
    ALL = "all"
    TRUE_PLACEBO = "true-placebo"
    ICS_PLACEBO = "ics"


@dataclass(frozen=True)
class RateWithSE:
    """Reported annualized rate with a linear-scale standard error."""
    rate: float
    se: float


@dataclass(frozen=True)
class CountAndZeros:
    total_events: int
    zero_patients: int


@dataclass(frozen=True)
class CountOnly:
    total_events: int


@dataclass(frozen=True)
class ZerosOnly:
    zero_patients: int


OutcomeEvidence = Union[RateWithSE, CountAndZeros, CountOnly, ZerosOnly]

EVIDENCE_LABELS = {
    RateWithSE: "rate+se",
    CountAndZeros: "count+zeros",
    CountOnly: "count",
    ZerosOnly: "zeros",
}


@dataclass(frozen=True)
class CovariateSet:
    sgrq: Optional[float] = None
    fev1: Optional[float] = None
    smokers_pct: Optional[float] = None
    pack_years: Optional[float] = None
    male_pct: Optional[float] = None
    mean_age: Optional[float] = None

    def get(self, name: str) -> Optional[float]:
        return getattr(self, name)


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    publication_year: int
    n_patients: int
    study_duration_years: float
    mean_followup_years: Optional[float]
    placebo_kind: PlaceboKind
    evidence: OutcomeEvidence
    covariables: CovariateSet = field(default_factory=CovariateSet)
    quality_score: Optional[int] = None


@dataclass(frozen=True)
class Provenance:
    source: str
    ingested_at: str


@dataclass(frozen=True)
class Dataset:
    records: tuple[StudyRecord, ...]
    provenance: Provenance

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class IngestOptions:
    """Knobs for ingestion-time validation and conversions."""
    year_window: tuple[int, int] = (1980, 2030)
    # Tolerance when a row reports both a rate and a total count: the two are
    # accepted as consistent if the implied counts differ by at most
    # max(1, consistency_rtol * implied).
    consistency_rtol: float = 0.05


def exposure(record: StudyRecord, basis: str = "followup") -> float:
    """Patient-years of observation for one study.

    ``basis="followup"`` uses the mean follow-up when reported, falling back
    to the nominal duration; ``basis="duration"`` always uses the duration.
    """
    return record.n_patients * per_patient_exposure(record, basis)


def per_patient_exposure(record: StudyRecord, basis: str = "followup") -> float:
    if basis == "duration":
        return record.study_duration_years
    if basis != "followup":
        raise ValueError(f"unknown exposure basis {basis!r}")
    if record.mean_followup_years is not None:
        return record.mean_followup_years
    return record.study_duration_years


def total_exposure(ds: Dataset, basis: str = "followup") -> float:
    return sum(exposure(r, basis) for r in ds.records)


def subset_filter(ds: Dataset, kind: Subset | str) -> Dataset:
    kind = Subset(kind)
    if kind is Subset.ALL:
        return ds
    want = PlaceboKind.TRUE if kind is Subset.TRUE_PLACEBO else PlaceboKind.ICS
    kept = tuple(r for r in ds.records if r.placebo_kind is want)
    if not kept:
        warnings.warn(f"subset {kind.value!r} matched no studies",
                      EmptySubsetWarning, stacklevel=2)
    return Dataset(records=kept, provenance=ds.provenance)


def select_records(ds: Dataset, index: Sequence[int]) -> Dataset:
    return Dataset(records=tuple(ds.records[i] for i in index),
                   provenance=ds.provenance)


@dataclass(frozen=True)
class VariableSummary:
    n: int
    median: float
    minimum: float
    maximum: float


SUMMARY_VARIABLES = (
    ("n_patients", lambda r: float(r.n_patients)),
    ("duration_yr", lambda r: r.study_duration_years),
    ("mean_followup_yr", lambda r: r.mean_followup_years),
    ("mean_age", lambda r: r.covariables.mean_age),
    ("male_pct", lambda r: r.covariables.male_pct),
    ("smokers_pct", lambda r: r.covariables.smokers_pct),
    ("pack_years", lambda r: r.covariables.pack_years),
    ("fev1_pct", lambda r: r.covariables.fev1),
    ("sgrq", lambda r: r.covariables.sgrq),
)


def _median(values: list[float]) -> float:
    s = sorted(values)
    m = len(s)
    if m % 2:
        return s[m // 2]
    return 0.5 * (s[m // 2 - 1] + s[m // 2])


def descriptive_summary(ds: Dataset) -> dict[str, VariableSummary]:
    """Per-variable count of reporting studies, median, and range."""
    if not ds.records:
        raise ValueError("descriptive_summary requires a nonempty dataset")
    out: dict[str, VariableSummary] = {}
    for name, get in SUMMARY_VARIABLES:
        vals = [get(r) for r in ds.records if get(r) is not None]
        if vals:
            out[name] = VariableSummary(len(vals), _median(vals),
                                        min(vals), max(vals))
        else:
            out[name] = VariableSummary(0, math.nan, math.nan, math.nan)
    return out


def evidence_census(ds: Dataset) -> dict[str, int]:
    counts = {label: 0 for label in EVIDENCE_LABELS.values()}
    for r in ds.records:
        counts[EVIDENCE_LABELS[type(r.evidence)]] += 1
    return counts


# ---------------------------------------------------------------------------
# ingestion


def _parse_float(raw: str, row: int, col: str) -> Optional[float]:
    raw = raw.strip()
    if not raw:
        return None
    try:
        v = float(raw)
    except ValueError:
        raise BadNumeric(f"cannot parse {raw!r} as a number", row, col) from None
    if not math.isfinite(v):
        raise BadNumeric(f"non-finite value {raw!r}", row, col)
    return v


def _parse_int(raw: str, row: int, col: str) -> Optional[int]:
    v = _parse_float(raw, row, col)
    if v is None:
        return None
    if v != int(v):
        raise BadNumeric(f"expected an integer, got {raw!r}", row, col)
    return int(v)


def _check_range(value: Optional[float], lo: float, hi: float,
                 row: int, col: str) -> Optional[float]:
    if value is not None and not (lo <= value <= hi):
        raise InvariantViolation(f"{col} = {value} outside [{lo}, {hi}]",
                                 row, col)
    return value


def _resolve_evidence(row: dict, rownum: int, n: int,
                      delta: float, options: IngestOptions) -> OutcomeEvidence:
    rate = _parse_float(row["rate"], rownum, "rate")
    se = _parse_float(row["rate_se"], rownum, "rate_se")
    ci_lo = _parse_float(row["rate_ci_lo"], rownum, "rate_ci_lo")
    ci_hi = _parse_float(row["rate_ci_hi"], rownum, "rate_ci_hi")
    total = _parse_int(row["total_events"], rownum, "total_events")
    zeros = _parse_int(row["zero_patients"], rownum, "zero_patients")
    zprop = _parse_float(row["zero_proportion"], rownum, "zero_proportion")

    if se is None and (ci_lo is not None or ci_hi is not None):
        if ci_lo is None or ci_hi is None:
            raise ConflictingEvidence("confidence interval needs both bounds",
                                      rownum)
        if ci_hi <= ci_lo:
            raise InvariantViolation("rate_ci_hi must exceed rate_ci_lo",
                                     rownum, "rate_ci_hi")
        se = (ci_hi - ci_lo) / (2.0 * CI_Z)

    if zprop is not None:
        _check_range(zprop, 0.0, 1.0, rownum, "zero_proportion")
        implied = round(zprop * n)  # round-half-to-even
        if zeros is not None and zeros != implied:
            raise ConflictingEvidence(
                f"zero_patients = {zeros} disagrees with zero_proportion "
                f"({zprop} of {n} rounds to {implied})", rownum)
        zeros = implied

    if rate is not None and rate <= 0:
        raise InvariantViolation("rate must be positive", rownum, "rate")
    if se is not None and se <= 0:
        raise InvariantViolation("rate_se must be positive", rownum, "rate_se")
    if total is not None and total < 0:
        raise InvariantViolation("total_events must be >= 0", rownum,
                                 "total_events")
    if zeros is not None and not (0 <= zeros <= n):
        raise InvariantViolation(
            f"zero_patients = {zeros} outside [0, n_patients = {n}]",
            rownum, "zero_patients")

    has_rate_se = rate is not None and se is not None

    if rate is not None and total is not None:
        implied = round(rate * n * delta)
        if abs(total - implied) > max(1.0, options.consistency_rtol * implied):
            raise ConflictingEvidence(
                f"rate {rate} implies about {implied} events over "
                f"{n * delta:g} patient-years but total_events = {total}",
                rownum)

    if has_rate_se:
        if zeros is not None:
            raise ConflictingEvidence(
                "a rate with uncertainty cannot be combined with zero-patient "
                "counts; drop one of the two", rownum)
        return RateWithSE(rate=rate, se=se)

    if rate is not None and total is None:
        # rate-only rows are converted to a total count over the exposure
        total = round(rate * n * delta)

    if total is not None and zeros is not None:
        if zeros == n and total != 0:
            raise InvariantViolation(
                "all patients event-free but total_events > 0", rownum,
                "total_events")
        return CountAndZeros(total_events=total, zero_patients=zeros)
    if total is not None:
        return CountOnly(total_events=total)
    if zeros is not None:
        return ZerosOnly(zero_patients=zeros)
    raise ConflictingEvidence("no outcome evidence in any supported format",
                              rownum)


def _record_from_row(row: dict, rownum: int, options: IngestOptions) -> StudyRecord:
    study_id = row["study_id"].strip()
    if not study_id:
        raise InvariantViolation("study_id is empty", rownum, "study_id")

    year = _parse_int(row["year"], rownum, "year")
    if year is None:
        raise BadNumeric("year is required", rownum, "year")
    lo, hi = options.year_window
    if not (lo <= year <= hi):
        raise InvariantViolation(
            f"year {year} outside plausible window [{lo}, {hi}]", rownum,
            "year")

    n = _parse_int(row["n_patients"], rownum, "n_patients")
    if n is None or n < 1:
        raise InvariantViolation("n_patients must be a positive integer",
                                 rownum, "n_patients")

    duration = _parse_float(row["duration_yr"], rownum, "duration_yr")
    if duration is None or duration <= 0:
        raise InvariantViolation("duration_yr must be positive", rownum,
                                 "duration_yr")

    followup = _parse_float(row["mean_followup_yr"], rownum,
                            "mean_followup_yr")
    if followup is not None and not (0 < followup <= duration):
        raise InvariantViolation(
            f"mean_followup_yr = {followup} must lie in (0, duration_yr = "
            f"{duration}]", rownum, "mean_followup_yr")

    kind_raw = row["placebo_type"].strip().lower()
    try:
        kind = PlaceboKind(kind_raw)
    except ValueError:
        raise InvariantViolation(
            f"placebo_type must be 'true' or 'ics', got {kind_raw!r}",
            rownum, "placebo_type") from None

    delta = followup if followup is not None else duration
    evidence = _resolve_evidence(row, rownum, n, delta, options)

    cov = CovariateSet(
        sgrq=_check_range(_parse_float(row["sgrq"], rownum, "sgrq"),
                          0, 100, rownum, "sgrq"),
        fev1=_check_range(_parse_float(row["fev1_pct"], rownum, "fev1_pct"),
                          0, 100, rownum, "fev1_pct"),
        smokers_pct=_check_range(
            _parse_float(row["smokers_pct"], rownum, "smokers_pct"),
            0, 100, rownum, "smokers_pct"),
        pack_years=_check_range(
            _parse_float(row["pack_years"], rownum, "pack_years"),
            0, 300, rownum, "pack_years"),
        male_pct=_check_range(
            _parse_float(row["male_pct"], rownum, "male_pct"),
            0, 100, rownum, "male_pct"),
        mean_age=_check_range(
            _parse_float(row["mean_age"], rownum, "mean_age"),
            0, 120, rownum, "mean_age"),
    )

    quality = _parse_int(row["oxford_score"], rownum, "oxford_score")
    if quality is not None and not (0 <= quality <= 5):
        raise InvariantViolation("oxford_score must be in 0..5", rownum,
                                 "oxford_score")

    return StudyRecord(
        study_id=study_id,
        publication_year=year,
        n_patients=n,
        study_duration_years=duration,
        mean_followup_years=followup,
        placebo_kind=kind,
        evidence=evidence,
        covariables=cov,
        quality_score=quality,
    )


def parse_csv_text(text: str, source: str = "<memory>",
                   options: IngestOptions | None = None) -> Dataset:
    """Parse study-table CSV content; see :func:`ingest_csv`."""
    options = options or IngestOptions()
    lines = text.splitlines(keepends=True)
    # '# ...' comment lines (e.g. the run-manifest stamp) are skipped but
    # keep their line numbers for error reporting.
    numbered = [(i + 1, ln) for i, ln in enumerate(lines)
                if not ln.lstrip().startswith("#") and ln.strip()]
    if not numbered:
        raise MissingColumn("file has no header row")
    header_line = numbered[0][1]
    reader = csv.reader(io.StringIO(header_line))
    header = [h.strip() for h in next(reader)]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"missing required column(s): {', '.join(missing)}")

    records = []
    seen: dict[str, int] = {}
    for rownum, line in numbered[1:]:
        cells = next(csv.reader(io.StringIO(line)))
        if len(cells) < len(header):
            cells = cells + [""] * (len(header) - len(cells))
        row = {h: c for h, c in zip(header, cells)}
        rec = _record_from_row(row, rownum, options)
        if rec.study_id in seen:
            raise InvariantViolation(
                f"duplicate study_id {rec.study_id!r} (first seen at row "
                f"{seen[rec.study_id]})", rownum, "study_id")
        seen[rec.study_id] = rownum
        records.append(rec)

    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return Dataset(records=tuple(records),
                   provenance=Provenance(source=source, ingested_at=stamp))


def ingest_csv(path: str | Path,
               options: IngestOptions | None = None) -> Dataset:
    """Read and validate a study table.

    Raises :class:`MissingColumn`, :class:`BadNumeric`,
    :class:`InvariantViolation`, or :class:`ConflictingEvidence` with the
    offending row/column on the first violation found.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_csv_text(text, source=str(path), options=options)


# ---------------------------------------------------------------------------
# serialization (round-trip partner of ingest_csv)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_to_row(rec: StudyRecord) -> dict[str, str]:
    row = {c: "" for c in COLUMNS}
    row["study_id"] = rec.study_id
    row["year"] = str(rec.publication_year)
    row["n_patients"] = str(rec.n_patients)
    row["duration_yr"] = _fmt(rec.study_duration_years)
    row["mean_followup_yr"] = _fmt(rec.mean_followup_years)
    row["placebo_type"] = rec.placebo_kind.value
    ev = rec.evidence
    if isinstance(ev, RateWithSE):
        row["rate"] = _fmt(ev.rate)
        row["rate_se"] = _fmt(ev.se)
    elif isinstance(ev, CountAndZeros):
        row["total_events"] = str(ev.total_events)
        row["zero_patients"] = str(ev.zero_patients)
    elif isinstance(ev, CountOnly):
        row["total_events"] = str(ev.total_events)
    else:
        row["zero_patients"] = str(ev.zero_patients)
    cov = rec.covariables
    row["sgrq"] = _fmt(cov.sgrq)
    row["fev1_pct"] = _fmt(cov.fev1)
    row["smokers_pct"] = _fmt(cov.smokers_pct)
    row["pack_years"] = _fmt(cov.pack_years)
    row["male_pct"] = _fmt(cov.male_pct)
    row["mean_age"] = _fmt(cov.mean_age)
    row["oxford_score"] = _fmt(rec.quality_score)
    return row


def to_csv_text(ds: Dataset, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    writer = csv.DictWriter(buf, fieldnames=list(COLUMNS), lineterminator="\n")
    writer.writeheader()
    for rec in ds.records:
        writer.writerow(record_to_row(rec))
    return buf.getvalue()


def write_csv(ds: Dataset, path: str | Path, comment: str | None = None) -> None:
    Path(path).write_text(to_csv_text(ds, comment=comment), encoding="utf-8")
