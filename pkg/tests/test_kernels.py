"""Probability-kernel correctness against closed forms and scipy oracles."""

import math

import numpy as np
import pytest
from scipy import stats

from countsynth import kernels
from countsynth.errors import DomainError
from countsynth.model import aggregate_nb_params, nb_log_pmf, zero_prob


class TestLogGamma:
    def test_matches_stdlib_to_1e12(self):
        xs = np.concatenate([
            np.linspace(1e-3, 0.499, 40),
            np.linspace(0.5, 30.0, 120),
            np.geomspace(30.0, 1e8, 60),
        ])
        for x in xs:
            mine = kernels.lgamma_pos(float(x))
            ref = math.lgamma(float(x))
            assert abs(mine - ref) <= 1e-12 * max(1.0, abs(ref))

    def test_factorials(self):
        assert kernels.lgamma_pos(5.0) == pytest.approx(math.log(24.0), abs=1e-13)
        assert kernels.lgamma_pos(1.0) == pytest.approx(0.0, abs=1e-14)


class TestNbLogPmf:
    def test_zero_count_closed_form(self):
        # (1/phi) * ln(1 + phi*mu) at y=0: -2*ln(2)
        assert nb_log_pmf(0, 2.0, 0.5) == pytest.approx(-2.0 * math.log(2.0),
                                                        abs=1e-12)

    def test_poisson_reduction(self):
        expected = 3 * math.log(2.0) - 2.0 - math.log(6.0)
        assert nb_log_pmf(3, 2.0, 0.0) == pytest.approx(expected, abs=1e-12)

    def test_against_gamma_function_oracle(self):
        # frozen from scipy.stats.nbinom.logpmf(5, 1/0.5, 1/(1+0.5*2))
        assert nb_log_pmf(5, 2.0, 0.5) == pytest.approx(-3.0602707946915615,
                                                        abs=1e-10)

    def test_matches_scipy_on_grid(self):
        for y in (0, 1, 4, 20, 150):
            for mu in (0.2, 2.0, 35.0):
                for phi in (1e-3, 0.5, 4.0):
                    ref = stats.nbinom.logpmf(y, 1.0 / phi,
                                              1.0 / (1.0 + phi * mu))
                    assert nb_log_pmf(y, mu, phi) == pytest.approx(
                        float(ref), rel=1e-9, abs=1e-9)

    def test_normalization(self):
        # phi capped at 1: beyond that the distribution itself keeps more
        # than 1e-9 of its mass above this cutoff (checked against scipy's
        # CDF), so larger phi cannot satisfy the bound for any implementation
        for mu in (0.5, 2.0, 10.0, 40.0):
            for phi in (0.0, 0.01, 0.1, 0.5, 1.0):
                cutoff = math.ceil(mu + 20 * math.sqrt(mu * (1 + phi * mu)) + 50)
                total = sum(math.exp(nb_log_pmf(y, mu, phi))
                            for y in range(cutoff + 1))
                assert total >= 1.0 - 1e-9

    def test_poisson_continuity(self):
        for y in range(0, 51, 5):
            for mu in (0.1, 1.0, 5.0, 20.0):
                nb = kernels.nb_log_pmf(float(y), mu, 1e-10)
                po = kernels.poisson_log_pmf(float(y), mu)
                assert abs(nb - po) < 1e-6

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            nb_log_pmf(1, 0.0, 0.5)
        with pytest.raises(DomainError):
            nb_log_pmf(1, 1.0, -0.1)
        with pytest.raises(DomainError):
            nb_log_pmf(-1, 1.0, 0.5)
        with pytest.raises(DomainError):
            nb_log_pmf(1.5, 1.0, 0.5)


class TestZeroProb:
    def test_poisson_limit(self):
        assert zero_prob(1.0, 0.5, 0.0) == pytest.approx(math.exp(-0.5),
                                                         abs=1e-12)

    def test_closed_form(self):
        assert zero_prob(1.0, 0.5, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_derived_example(self):
        # (1 + 0.5*1.0)^-2; equal to exp(nb_log_pmf(0, 1.0, 0.5)) and to the
        # Monte-Carlo zero fraction (see test_simulate for the MC side)
        val = zero_prob(0.5, 2.0, 0.5)
        assert val == pytest.approx(4.0 / 9.0, abs=1e-12)
        assert val == pytest.approx(math.exp(nb_log_pmf(0, 1.0, 0.5)),
                                    abs=1e-12)

    def test_identity_with_nb_zero_term_on_grid(self):
        deltas = np.linspace(0.1, 3.0, 10)
        lams = np.geomspace(0.05, 8.0, 10)
        phis = np.concatenate([[0.0], np.geomspace(1e-4, 10.0, 9)])
        for d in deltas:
            for l in lams:
                for p in phis:
                    zp = zero_prob(float(d), float(l), float(p))
                    nb0 = math.exp(kernels.nb_log_pmf(0.0, float(d * l),
                                                      float(p)))
                    assert abs(zp - nb0) < 1e-12

    def test_monotone_in_phi(self):
        # more overdispersion -> more zero-event patients at fixed mean
        for mu in (0.2, 1.0, 5.0):
            probs = [zero_prob(1.0, mu, p)
                     for p in (0.0, 0.1, 0.5, 1.0, 3.0, 10.0)]
            assert all(b > a for a, b in zip(probs, probs[1:]))

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            zero_prob(0.0, 1.0, 0.5)
        with pytest.raises(DomainError):
            zero_prob(1.0, -1.0, 0.5)


class TestAggregate:
    def test_identity_at_one_patient(self):
        assert aggregate_nb_params(1, 0.7, 1.3, 0.5) == (0.7 * 1.3, 0.5)

    def test_moment_bookkeeping(self):
        mean, phi = aggregate_nb_params(100, 0.5, 0.8, 0.5)
        assert mean == pytest.approx(40.0)
        assert phi == pytest.approx(0.005)
        assert mean * (1 + phi * mean) == pytest.approx(48.0)

    def test_poisson_closure(self):
        mean, phi = aggregate_nb_params(50, 1.0, 1.0, 0.0)
        assert mean == 50.0 and phi == 0.0

    def test_sum_of_patients_monte_carlo(self):
        # empirical mean/variance of summed per-patient NB draws vs the
        # aggregated parameters, within 4 MC standard errors
        rng = np.random.default_rng(42)
        n, delta, lam, phi = 100, 0.5, 0.8, 0.5
        reps = 100_000
        mu = delta * lam
        g = rng.gamma(shape=1.0 / phi, scale=phi * mu, size=(reps, n))
        totals = rng.poisson(g).sum(axis=1)
        mean, phi_agg = aggregate_nb_params(n, delta, lam, phi)
        var = mean * (1 + phi_agg * mean)
        se_mean = math.sqrt(var / reps)
        assert abs(totals.mean() - mean) < 4 * se_mean
        # variance of the sample variance for an overdispersed count
        m4 = ((totals - totals.mean()) ** 4).mean()
        se_var = math.sqrt((m4 - var ** 2) / reps)
        assert abs(totals.var() - var) < 4 * se_var


class TestZerosLoglik:
    def test_binomial_modal_term(self):
        # pick lambda so the zero probability is exactly 0.6 (phi = 0)
        lam = -math.log(0.6) / 0.5
        val = kernels.zeros_loglik(120.0, 200.0, 0.5, lam, 0.0)
        # frozen from scipy.stats.binom.logpmf(120, 200, 0.6)
        assert val == pytest.approx(-2.8558584764177652, abs=1e-10)

    def test_matches_direct_binomial(self):
        for k in (0, 5, 60, 200):
            for phi in (0.0, 0.4, 2.0):
                pi = zero_prob(0.5, 1.4, phi)
                ref = stats.binom.logpmf(k, 200, pi)
                val = kernels.zeros_loglik(float(k), 200.0, 0.5, 1.4, phi)
                assert val == pytest.approx(float(ref), rel=1e-9, abs=1e-9)

    def test_extreme_rate_upper_tail(self):
        # huge rate: zero probability underflows, so any zeros are impossible
        assert kernels.zeros_loglik(1.0, 10.0, 1.0, 1e6, 0.0) == -math.inf
        assert kernels.zeros_loglik(0.0, 10.0, 1.0, 1e6, 0.0) == 0.0


class TestDensities:
    def test_normal_matches_scipy(self):
        for x, m, s in [(0.0, 0.0, 0.1), (1.2, -0.4, 2.0), (-3.0, 0.0, 10.0)]:
            assert kernels.normal_logpdf(x, m, s) == pytest.approx(
                float(stats.norm.logpdf(x, m, s)), abs=1e-12)

    def test_halfnormal_matches_scipy(self):
        for x, s in [(0.0, 1.0), (0.5, 1.0), (2.0, 0.7)]:
            assert kernels.halfnormal_logpdf(x, s) == pytest.approx(
                float(stats.halfnorm.logpdf(x, scale=s)), abs=1e-12)
        assert kernels.halfnormal_logpdf(-0.1, 1.0) == -math.inf

    def test_halfnormal_mode_constant(self):
        assert kernels.halfnormal_logpdf(0.0, 1.0) == pytest.approx(
            -0.225791352644727, abs=1e-12)
