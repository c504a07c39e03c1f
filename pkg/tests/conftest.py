import numpy as np
import pytest

from countsynth.data import (
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


def make_record(study_id="s1", year=2005, n=200, duration=1.0, followup=None,
                kind=PlaceboKind.TRUE, evidence=None, cov=None, quality=None):
    return StudyRecord(
        study_id=study_id, publication_year=year, n_patients=n,
        study_duration_years=duration, mean_followup_years=followup,
        placebo_kind=kind,
        evidence=evidence if evidence is not None
        else CountOnly(total_events=100),
        covariables=cov or CovariateSet(), quality_score=quality)


def make_dataset(records, source="<test>"):
    return Dataset(records=tuple(records),
                   provenance=Provenance(source=source, ingested_at="t"))


@pytest.fixture
def mixed_dataset():
    """Six studies covering every evidence variant and both placebo kinds."""
    recs = [
        make_record("a", 1998, 150, 0.5, 0.45, PlaceboKind.TRUE,
                    RateWithSE(rate=1.8, se=0.2),
                    CovariateSet(sgrq=48.0, fev1=45.0)),
        make_record("b", 2002, 300, 1.0, 0.9, PlaceboKind.ICS,
                    CountAndZeros(total_events=350, zero_patients=90),
                    CovariateSet(fev1=50.0, mean_age=64.0)),
        make_record("c", 2006, 220, 0.5, None, PlaceboKind.ICS,
                    CountOnly(total_events=130),
                    CovariateSet(sgrq=44.0, fev1=52.0, male_pct=70.0)),
        make_record("d", 2010, 400, 1.0, 0.8, PlaceboKind.TRUE,
                    ZerosOnly(zero_patients=180),
                    CovariateSet(fev1=55.0)),
        make_record("e", 2013, 180, 0.5, 0.4, PlaceboKind.ICS,
                    CountAndZeros(total_events=95, zero_patients=80),
                    CovariateSet(sgrq=40.0)),
        make_record("f", 2016, 260, 1.0, 0.95, PlaceboKind.TRUE,
                    CountOnly(total_events=190), CovariateSet()),
    ]
    return make_dataset(recs)


def rel_close(a, b, tol):
    return abs(a - b) <= tol * max(abs(a), abs(b))
