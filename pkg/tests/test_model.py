"""Likelihood dispatch, priors, and joint posterior assembly."""

import math

import numpy as np
import pytest
from scipy import stats

from countsynth.data import (
    CountAndZeros,
    CountOnly,
    RateWithSE,
    ZerosOnly,
)
from countsynth.errors import DimensionMismatch, DomainError
from countsynth.model import (
    HierarchicalModel,
    HyperParams,
    PriorSpec,
    StudyEffects,
    log_posterior,
    log_prior,
    log_prior_terms,
    loglik_study,
    zero_prob,
)

from conftest import make_dataset, make_record


class TestLoglikStudy:
    def test_rate_with_se_log_scale(self):
        # N(log rate; log_lambda, se/rate) at its mean: ln(1/(0.1*sqrt(2pi)))
        rec = make_record(evidence=RateWithSE(rate=1.0, se=0.1))
        val = loglik_study(rec, log_lambda=0.0, log_phi=0.0)
        assert val == pytest.approx(1.3836465597893728, abs=1e-12)

    def test_rate_with_se_linear_scale_flag(self):
        rec = make_record(evidence=RateWithSE(rate=1.0, se=0.1))
        val = loglik_study(rec, 0.0, 0.0, rate_likelihood_scale="linear")
        assert val == pytest.approx(
            float(stats.norm.logpdf(1.0, 1.0, 0.1)), abs=1e-12)

    def test_zeros_only_modal_term(self):
        # lambda chosen so the zero probability equals 0.6 at phi -> 0
        delta = 0.5
        lam = -math.log(0.6) / delta
        rec = make_record(n=200, duration=delta,
                          evidence=ZerosOnly(zero_patients=120))
        val = loglik_study(rec, math.log(lam), -30.0)
        assert val == pytest.approx(float(stats.binom.logpmf(120, 200, 0.6)),
                                    abs=1e-9)

    def test_count_only_uses_aggregated_parameters(self):
        rec = make_record(n=100, duration=0.5,
                          evidence=CountOnly(total_events=60))
        lam, phi = 1.3, 0.5
        val = loglik_study(rec, math.log(lam), math.log(phi))
        ref = stats.nbinom.logpmf(
            60, 100 / phi, 1.0 / (1.0 + (phi / 100) * (100 * 0.5 * lam)))
        assert val == pytest.approx(float(ref), rel=1e-9)

    def test_composite_equals_sum_of_parts(self):
        both = make_record(n=150, duration=0.5,
                           evidence=CountAndZeros(total_events=90,
                                                  zero_patients=70))
        count = make_record(n=150, duration=0.5,
                            evidence=CountOnly(total_events=90))
        zeros = make_record(n=150, duration=0.5,
                            evidence=ZerosOnly(zero_patients=70))
        ll, lf = 0.2, -0.4
        assert loglik_study(both, ll, lf) == pytest.approx(
            loglik_study(count, ll, lf) + loglik_study(zeros, ll, lf),
            abs=1e-12)

    def test_exposure_basis_switch(self):
        rec = make_record(n=100, duration=1.0, followup=0.5,
                          evidence=CountOnly(total_events=60))
        follow = loglik_study(rec, 0.1, 0.0)
        nominal = loglik_study(rec, 0.1, 0.0, exposure_basis="duration")
        assert follow != nominal

    def test_rejects_nonfinite_effects(self):
        rec = make_record()
        with pytest.raises(DomainError):
            loglik_study(rec, math.inf, 0.0)


class TestLogPrior:
    def test_intercept_outside_bounds(self):
        h = HyperParams(beta=(math.log(2000.0),), sigma_lambda=0.4,
                        mu_phi=0.0, sigma_phi=0.7)
        assert log_prior(h, PriorSpec()) == -math.inf

    def test_sigma_zero_is_halfnormal_mode(self):
        terms = log_prior_terms(
            HyperParams(beta=(0.0,), sigma_lambda=0.0, mu_phi=0.0,
                        sigma_phi=0.7), PriorSpec())
        assert terms["sigma_lambda"] == pytest.approx(-0.225791352644727,
                                                      abs=1e-12)

    def test_full_point_term_by_term(self):
        # independent density evaluations via scipy, frozen
        h = HyperParams(beta=(0.3, -0.05), sigma_lambda=0.4, mu_phi=-0.1,
                        sigma_phi=0.7)
        prior = PriorSpec()
        terms = log_prior_terms(h, prior)
        assert terms["beta0"] == pytest.approx(-2.625791914476011, abs=1e-12)
        assert terms["beta1"] == pytest.approx(-3.2215361261987185, abs=1e-12)
        assert terms["sigma_lambda"] == pytest.approx(-0.30579135264472745,
                                                      abs=1e-12)
        assert terms["mu_phi"] == pytest.approx(-2.9134739869277917, abs=1e-12)
        assert terms["sigma_phi"] == pytest.approx(-0.4707913526447274,
                                                   abs=1e-12)
        assert log_prior(h, prior) == pytest.approx(sum(terms.values()),
                                                    abs=1e-12)

    def test_negative_heterogeneity_excluded(self):
        h = HyperParams.__new__(HyperParams)  # bypass validation on purpose
        object.__setattr__(h, "beta", (0.0,))
        object.__setattr__(h, "sigma_lambda", -0.1)
        object.__setattr__(h, "mu_phi", 0.0)
        object.__setattr__(h, "sigma_phi", 0.5)
        assert log_prior(h, PriorSpec()) == -math.inf

    def test_prior_overrides(self):
        spec = PriorSpec.from_dict({"sigma_lambda": {"scale": 2.0},
                                    "beta0": {"lo": -1.0, "hi": 1.0}})
        assert spec.sigma_lambda.scale == 2.0
        assert spec.beta0.lo == -1.0
        # untouched components keep their defaults
        assert spec.sigma_phi.scale == 1.0
        assert spec.mu_phi.lo == math.log(0.0001)


class TestLogPosterior:
    def test_empty_dataset_is_prior(self):
        ds = make_dataset([])
        h = HyperParams(beta=(0.3,), sigma_lambda=0.4, mu_phi=-0.1,
                        sigma_phi=0.7)
        eff = StudyEffects(log_lambda=(), log_phi=())
        lp = log_posterior(h, eff, ds, np.zeros((0, 1)), PriorSpec())
        assert lp == pytest.approx(log_prior(h, PriorSpec()), abs=1e-12)

    def test_single_study_manual_assembly(self):
        rec = make_record(n=100, duration=0.5,
                          evidence=CountOnly(total_events=60))
        ds = make_dataset([rec])
        prior = PriorSpec()
        h = HyperParams(beta=(0.3, -0.06), sigma_lambda=0.4, mu_phi=-0.1,
                        sigma_phi=0.7)
        eff = StudyEffects(log_lambda=(0.25,), log_phi=(-0.2,))
        design = np.array([[1.0, 3.0]])
        lp = log_posterior(h, eff, ds, design, prior)
        eta = 0.3 + -0.06 * 3.0
        manual = (log_prior(h, prior)
                  + stats.norm.logpdf(0.25, eta, 0.4)
                  + stats.norm.logpdf(-0.2, -0.1, 0.7)
                  + loglik_study(rec, 0.25, -0.2))
        assert lp == pytest.approx(float(manual), abs=1e-10)

    def test_duplicating_a_study_doubles_its_contribution(self):
        rec = make_record(n=100, duration=0.5,
                          evidence=CountOnly(total_events=60))
        prior = PriorSpec()
        h = HyperParams(beta=(0.3,), sigma_lambda=0.4, mu_phi=-0.1,
                        sigma_phi=0.7)
        one = log_posterior(h, StudyEffects((0.25,), (-0.2,)),
                            make_dataset([rec]), np.ones((1, 1)), prior)
        rec2 = make_record(study_id="s2", n=100, duration=0.5,
                           evidence=CountOnly(total_events=60))
        two = log_posterior(h, StudyEffects((0.25, 0.25), (-0.2, -0.2)),
                            make_dataset([rec, rec2]), np.ones((2, 1)), prior)
        base = log_prior(h, prior)
        assert two - base == pytest.approx(2 * (one - base), abs=1e-10)

    def test_permutation_invariance(self, mixed_dataset):
        prior = PriorSpec()
        n = len(mixed_dataset.records)
        rng = np.random.default_rng(1)
        h = HyperParams(beta=(0.3, -0.05), sigma_lambda=0.4, mu_phi=-0.1,
                        sigma_phi=0.7)
        ll = tuple(rng.normal(0.2, 0.3, n))
        lf = tuple(rng.normal(-0.1, 0.5, n))
        design = np.column_stack([
            np.ones(n),
            [r.publication_year - 2000 for r in mixed_dataset.records]])
        lp1 = log_posterior(h, StudyEffects(ll, lf), mixed_dataset, design,
                            prior)
        perm = rng.permutation(n)
        ds2 = make_dataset([mixed_dataset.records[i] for i in perm])
        lp2 = log_posterior(
            h, StudyEffects(tuple(ll[i] for i in perm),
                            tuple(lf[i] for i in perm)),
            ds2, design[perm], prior)
        assert lp1 == pytest.approx(lp2, rel=1e-12)

    def test_dimension_mismatch(self):
        ds = make_dataset([make_record()])
        h = HyperParams(beta=(0.3,), sigma_lambda=0.4, mu_phi=-0.1,
                        sigma_phi=0.7)
        with pytest.raises(DimensionMismatch):
            log_posterior(h, StudyEffects((0.1, 0.2), (0.0, 0.0)), ds,
                          np.ones((1, 1)), PriorSpec())
        with pytest.raises(DimensionMismatch):
            log_posterior(h, StudyEffects((0.1,), (0.0,)), ds,
                          np.ones((2, 1)), PriorSpec())


class TestHierarchicalModel:
    def test_parameter_layout(self, mixed_dataset):
        n = len(mixed_dataset.records)
        design = np.column_stack([np.ones(n), np.zeros(n)])
        m = HierarchicalModel(mixed_dataset, design, PriorSpec())
        assert m.dim == 2 + 3 + 2 * n
        assert m.param_names[:5] == ["beta0", "beta1", "sigma_lambda",
                                     "mu_phi", "sigma_phi"]
        assert m.param_names[5] == "log_lambda[a]"

    def test_draw_initial_deterministic_and_finite(self, mixed_dataset):
        n = len(mixed_dataset.records)
        design = np.ones((n, 1))
        m = HierarchicalModel(mixed_dataset, design, PriorSpec())
        x1 = m.draw_initial(np.random.default_rng(7))
        x2 = m.draw_initial(np.random.default_rng(7))
        assert np.array_equal(x1, x2)
        assert math.isfinite(m.log_posterior(x1))

    def test_initial_effects_at_conditional_means(self, mixed_dataset):
        n = len(mixed_dataset.records)
        design = np.ones((n, 1))
        m = HierarchicalModel(mixed_dataset, design, PriorSpec())
        x = m.draw_initial(np.random.default_rng(3))
        h, eff = m.unpack(x)
        assert eff.log_lambda == tuple([h.beta[0]] * n)
        assert eff.log_phi == tuple([h.mu_phi] * n)
