"""Artifact emission: CSV tables, aligned text tables, and the run manifest.

CSV files carry full double precision (shortest round-trip repr) and start
with a ``# run <hash>`` comment naming the manifest that produced them;
re-running with that manifest reproduces the files byte for byte.  Text
renderings round to three decimals and are presentation-only.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Optional

from .regression import FitReport, ScreenResult
from .data import Dataset, descriptive_summary, evidence_census, subset_filter


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(resolved_config: dict) -> str:
    return hashlib.sha256(canonical_json(resolved_config).encode()).hexdigest()


def build_manifest(command: str, resolved_config: dict,
                   diagnostics: Optional[dict] = None,
                   backend: str = "") -> dict:
    h = config_hash(resolved_config)
    manifest = {
        "command": command,
        "config": resolved_config,
        "config_hash": h,
        "backend": backend,
    }
    if diagnostics:
        manifest["diagnostics"] = diagnostics
    return manifest


def write_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _open_csv(path: Path, run_hash: str):
    fh = open(path, "w", newline="", encoding="utf-8")
    fh.write(f"# run {run_hash}\n")
    return fh


def write_parameters_csv(report: FitReport, path: str | Path,
                         run_hash: str) -> None:
    with _open_csv(Path(path), run_hash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "covariable", "median", "ci_lo", "ci_hi",
                    "pct_horizon", "pct_median", "pct_lo", "pct_hi",
                    "p_b", "p_b_text", "rhat", "ess"])
        for name, s in report.params.items():
            pcs = report.pct_changes.get(name, ())
            annual = pcs[0] if pcs else None
            w.writerow([
                name,
                report.coef_covariables.get(name, ""),
                _fmt(s.median), _fmt(s.ci_low), _fmt(s.ci_high),
                _fmt(annual.horizon if annual else None),
                _fmt(annual.summary.median if annual else None),
                _fmt(annual.summary.ci_low if annual else None),
                _fmt(annual.summary.ci_high if annual else None),
                _fmt(s.p_b), s.p_b_text(),
                _fmt(s.rhat), _fmt(s.ess),
            ])


def write_shrinkage_csv(report: FitReport, path: str | Path,
                        run_hash: str) -> None:
    with _open_csv(Path(path), run_hash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["study_id", "year", "median", "ci_lo", "ci_hi",
                    "evidence_format"])
        for row in report.shrinkage:
            w.writerow([row.study_id, row.year, _fmt(row.median),
                        _fmt(row.ci_low), _fmt(row.ci_high),
                        row.evidence_format])


def write_trend_csv(report: FitReport, path: str | Path,
                    run_hash: str) -> None:
    if report.trend is None:
        raise ValueError("this fit has no trend curve")
    with _open_csv(Path(path), run_hash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "median", "ci_lo", "ci_hi"])
        for pt in report.trend:
            w.writerow([_fmt(pt.year), _fmt(pt.median), _fmt(pt.ci_low),
                        _fmt(pt.ci_high)])


def write_screen_csv(results: list[ScreenResult], path: str | Path,
                     run_hash: str) -> None:
    with _open_csv(Path(path), run_hash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["covariable", "n", "r", "ci_lo", "ci_hi", "p"])
        for r in results:
            w.writerow([r.covariable, r.n, _fmt(r.r), _fmt(r.ci_low),
                        _fmt(r.ci_high), _fmt(r.p_value)])


def write_summary_csv(ds: Dataset, path: str | Path, run_hash: str) -> None:
    with _open_csv(Path(path), run_hash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "variable", "n", "median", "min", "max"])
        for subset in ("all", "true-placebo", "ics"):
            sub = subset_filter(ds, subset)
            if not sub.records:
                continue
            for var, s in descriptive_summary(sub).items():
                w.writerow([subset, var, s.n, _fmt(s.median),
                            _fmt(s.minimum), _fmt(s.maximum)])


# ---------------------------------------------------------------------------
# text rendering (3 decimals, presentation-only)


def _f3(x: Optional[float]) -> str:
    if x is None:
        return ""
    return f"{x:.3f}"


def _interval(s) -> str:
    return f"{_f3(s.median)} ({_f3(s.ci_low)}, {_f3(s.ci_high)})"


def render_parameters_text(report: FitReport) -> str:
    lines = [report.label, ""]
    header = (f"{'Parameter':<28}{'Estimate':<28}"
              f"{'Annual % change':<28}{'p_B':<12}")
    lines.append(header)
    lines.append("-" * len(header))
    for name, s in report.params.items():
        cov = report.coef_covariables.get(name, "")
        label = name if not cov or cov == "intercept" else f"{name} ({cov})"
        pcs = report.pct_changes.get(name, ())
        pct = _interval(pcs[0].summary) if pcs else ""
        lines.append(f"{label:<28}{_interval(s):<28}{pct:<28}"
                     f"{s.p_b_text():<12}")
    lines.append("")
    lines.append(f"max R-hat {report.diagnostics.max_rhat:.3f}, "
                 f"min ESS {report.diagnostics.min_ess:.0f}, "
                 f"{report.n_included} studies included"
                 + (f", excluded: {', '.join(report.excluded_ids)}"
                    if report.excluded_ids else ""))
    if report.diagnostics.flagged:
        lines.append("convergence flagged: "
                     + ", ".join(report.diagnostics.flagged))
    return "\n".join(lines) + "\n"


def render_screen_text(results: list[ScreenResult]) -> str:
    lines = []
    header = f"{'Covariable':<14}{'n':>4}  {'r':>8}  {'95% CI':<20}{'p':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in results:
        ci = f"({_f3(r.ci_low)}, {_f3(r.ci_high)})"
        lines.append(f"{r.covariable:<14}{r.n:>4}  {r.r:>8.3f}  {ci:<20}"
                     f"{r.p_value:>10.4f}")
    return "\n".join(lines) + "\n"


def render_summary_text(ds: Dataset) -> str:
    lines = []
    for subset, title in (("all", "All studies"),
                          ("true-placebo", "'True' placebos"),
                          ("ics", "ICS-placebos")):
        sub = subset_filter(ds, subset)
        if not sub.records:
            continue
        lines.append(f"{title} (N = {len(sub.records)})")
        header = f"  {'Variable':<20}{'N':>4}  {'Median':>10}  {'Range':<22}"
        lines.append(header)
        lines.append("  " + "-" * (len(header) - 2))
        for var, s in descriptive_summary(sub).items():
            if s.n == 0:
                lines.append(f"  {var:<20}{0:>4}  {'-':>10}  {'-':<22}")
                continue
            rng = f"({s.minimum:g}-{s.maximum:g})"
            lines.append(f"  {var:<20}{s.n:>4}  {s.median:>10g}  {rng:<22}")
        lines.append("")
    census = evidence_census(ds)
    lines.append("Evidence formats: "
                 + ", ".join(f"{k} = {v}" for k, v in census.items()))
    return "\n".join(lines) + "\n"
