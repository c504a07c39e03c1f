"""Sampler determinism, diagnostics, and summary conventions."""

import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from countsynth.errors import InsufficientDraws
from countsynth.mcmc import (
    GenericModel,
    McmcConfig,
    ess,
    rhat,
    run_chains,
    summarize,
    tail_probability,
)
from countsynth.model import HierarchicalModel, PriorSpec

from conftest import make_dataset


def prior_only_model(n_coef: int = 2) -> HierarchicalModel:
    ds = make_dataset([])
    return HierarchicalModel(ds, np.zeros((0, n_coef)), PriorSpec())


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        model = prior_only_model()
        cfg = McmcConfig(n_chains=2, n_adapt=200, n_samples=400, seed=123)
        s1 = run_chains(model, cfg)
        s2 = run_chains(model, cfg)
        assert np.array_equal(s1.draws, s2.draws)

    def test_concurrent_equals_sequential(self):
        model = prior_only_model()
        cfg = McmcConfig(n_chains=4, n_adapt=200, n_samples=400, seed=9)
        seq = run_chains(model, cfg)
        par = run_chains(model, dataclasses.replace(cfg, n_workers=4))
        assert np.array_equal(seq.draws, par.draws)

    def test_chain_count_bookkeeping(self):
        model = prior_only_model()
        cfg = McmcConfig(n_chains=4, n_adapt=100, n_samples=500, seed=1)
        s = run_chains(model, cfg)
        assert s.draws_for("beta0").shape == (4, 500)
        assert s.flat("beta0").size == 2000

    def test_thinning(self):
        model = prior_only_model()
        cfg = McmcConfig(n_chains=2, n_adapt=100, n_samples=600, thin=3,
                         seed=4)
        s = run_chains(model, cfg)
        assert s.n_kept == 200
        with pytest.raises(ValueError):
            McmcConfig(n_samples=500, thin=3)

    def test_long_csv_export(self, tmp_path):
        model = prior_only_model(n_coef=1)
        cfg = McmcConfig(n_chains=2, n_adapt=50, n_samples=100, seed=2)
        s = run_chains(model, cfg)
        out = tmp_path / "draws.csv"
        s.to_long_csv(out, comment="run deadbeef")
        lines = out.read_text().splitlines()
        assert lines[0] == "# run deadbeef"
        assert lines[1] == "chain,iteration,parameter,value"
        # 2 chains x 100 kept x 4 params
        assert len(lines) == 2 + 2 * 100 * 4
        chain, it, name, value = lines[2].split(",")
        assert (chain, it, name) == ("0", "1", "beta0")
        float(value)


class TestPriorRecovery:
    def test_prior_only_quantiles(self):
        # hyperparameter draws with no data must reproduce their priors
        model = prior_only_model(n_coef=2)
        cfg = McmcConfig(n_chains=2, n_adapt=2000, n_samples=8000, seed=77)
        s = run_chains(model, cfg)
        checks = {
            "beta0": lambda q: stats.uniform.cdf(
                q, math.log(0.001), math.log(1000) - math.log(0.001)),
            "beta1": lambda q: stats.norm.cdf(q, 0, 10),
            "sigma_lambda": lambda q: stats.halfnorm.cdf(q, scale=1.0),
            "mu_phi": lambda q: stats.uniform.cdf(
                q, math.log(1e-4), math.log(1e4) - math.log(1e-4)),
            "sigma_phi": lambda q: stats.halfnorm.cdf(q, scale=1.0),
        }
        for name, cdf in checks.items():
            draws = s.flat(name)
            for p in (0.025, 0.5, 0.975):
                q = np.quantile(draws, p, method="linear")
                assert abs(float(cdf(q)) - p) < 0.04, name

    def test_prior_only_rhat_small(self):
        model = prior_only_model(n_coef=1)
        cfg = McmcConfig(n_chains=4, n_adapt=2000, n_samples=5000, seed=5)
        s = run_chains(model, cfg)
        for name in model.hyper_names:
            assert rhat(s.draws_for(name)) < 1.01


class TestRhat:
    def test_identical_iid_chains_near_one(self):
        rng = np.random.default_rng(0)
        row = rng.normal(size=5000)
        chains = np.vstack([row, row, row, row])
        assert rhat(chains) == pytest.approx(1.0, abs=0.01)

    def test_disagreeing_chains_flagged(self):
        rng = np.random.default_rng(0)
        chains = np.vstack([rng.normal(-5, 1, 2000), rng.normal(5, 1, 2000)])
        assert rhat(chains) > 1.1

    def test_insufficient_draws(self):
        with pytest.raises(InsufficientDraws):
            rhat(np.zeros((1, 1000)))
        with pytest.raises(InsufficientDraws):
            rhat(np.zeros((4, 50)))


class TestEss:
    def test_iid_near_total(self):
        rng = np.random.default_rng(3)
        chains = rng.normal(size=(4, 5000))
        assert ess(chains) == pytest.approx(20000, rel=0.15)

    def test_ar1_analytic(self):
        # AR(1) with autocorrelation 0.9: ESS ~ total * (1-rho)/(1+rho)
        rho, n = 0.9, 20000
        rng = np.random.default_rng(11)
        chains = np.empty((4, n))
        for c in range(4):
            e = rng.normal(size=n)
            x = np.empty(n)
            x[0] = e[0] / math.sqrt(1 - rho * rho)
            for t in range(1, n):
                x[t] = rho * x[t - 1] + e[t]
            chains[c] = x
        expected = 4 * n / 19
        assert ess(chains) == pytest.approx(expected, rel=0.25)

    def test_bounded_by_total(self):
        rng = np.random.default_rng(8)
        chains = rng.normal(size=(2, 200))
        assert 0 < ess(chains) <= 400


class TestSummarize:
    def test_quantile_monotonicity_and_values(self):
        rng = np.random.default_rng(1)
        chains = rng.normal(2.0, 1.0, size=(4, 20000))
        s = summarize(chains)
        assert s.ci_low <= s.median <= s.ci_high
        assert s.median == pytest.approx(2.0, abs=0.05)
        assert s.ci_low == pytest.approx(2 - 1.96, abs=0.07)
        assert s.ci_high == pytest.approx(2 + 1.96, abs=0.07)

    def test_pb_balanced(self):
        rng = np.random.default_rng(2)
        chains = rng.normal(0.0, 1.0, size=(2, 10000))
        p, bound = tail_probability(chains)
        assert not bound
        assert p == pytest.approx(1.0, abs=0.05)

    def test_pb_empty_tail_convention(self):
        draws = -np.abs(np.random.default_rng(3).normal(size=(4, 20000))) - 0.1
        s = summarize(draws, tail_prob=True)
        assert s.p_b_is_bound
        assert s.p_b == pytest.approx(2.0 / 80000)
        assert s.p_b_text() == "< 0.000025"

    def test_pb_scale_invariance(self):
        rng = np.random.default_rng(4)
        draws = rng.normal(-0.5, 1.0, size=(2, 5000))
        p1, _ = tail_probability(draws)
        p2, _ = tail_probability(draws * 1234.5)
        assert p1 == p2

    def test_pb_only_when_requested(self):
        chains = np.random.default_rng(5).normal(size=(2, 200))
        assert summarize(chains).p_b is None


class TestGenericModel:
    def test_recovers_standard_normal(self):
        model = GenericModel(
            ["x"], lambda v: -0.5 * float(v[0]) ** 2, [0.0])
        cfg = McmcConfig(n_chains=2, n_adapt=2000, n_samples=20000, seed=6)
        s = run_chains(model, cfg)
        q = np.quantile(s.flat("x"), [0.025, 0.5, 0.975])
        assert q[1] == pytest.approx(0.0, abs=0.05)
        assert q[0] == pytest.approx(-1.96, abs=0.1)
        assert q[2] == pytest.approx(1.96, abs=0.1)
