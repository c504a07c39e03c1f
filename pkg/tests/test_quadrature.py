"""Grid-quadrature oracle behaviour."""

import math

import numpy as np
import pytest

from countsynth.errors import GridTooCoarse
from countsynth.model import PriorSpec
from countsynth.quadrature import (
    GridAxis,
    fixed_effect_oracle_logpost,
    quadrature_posterior,
    single_study_oracle_logpost,
)


class TestSingleStudy:
    def test_poisson_mode_at_rate_one(self):
        # 10 events over 10 patient-years, flat prior on the log rate:
        # the log-posterior peaks where the rate equals 1.0
        logpost = single_study_oracle_logpost(
            y=10, n_patients=10, delta=1.0, phi=0.0, prior=PriorSpec())
        res = quadrature_posterior(logpost, [GridAxis(-2.0, 2.0, 801)],
                                   ["log_lambda"])
        x, w = res.marginal("log_lambda")
        assert x[int(np.argmax(w))] == pytest.approx(0.0, abs=0.01)

    def test_mass_normalized(self):
        logpost = single_study_oracle_logpost(
            y=40, n_patients=100, delta=0.5, phi=0.3, prior=PriorSpec())
        res = quadrature_posterior(logpost, [GridAxis(-2.5, 1.5, 400)],
                                   ["log_lambda"])
        assert res.mass.sum() == pytest.approx(1.0, abs=1e-9)

    def test_grid_convergence_under_doubling(self):
        logpost = single_study_oracle_logpost(
            y=150, n_patients=300, delta=0.5, phi=0.4, prior=PriorSpec())
        coarse = quadrature_posterior(logpost, [GridAxis(-1.2, 1.2, 400)],
                                      ["log_lambda"])
        fine = quadrature_posterior(logpost, [GridAxis(-1.2, 1.2, 800)],
                                    ["log_lambda"])
        for p in (0.025, 0.5, 0.975):
            a = float(coarse.quantile("log_lambda", p))
            b = float(fine.quantile("log_lambda", p))
            # < 0.1% relative change on the rate scale
            assert abs(math.exp(a) / math.exp(b) - 1.0) < 1e-3

    def test_narrow_grid_rejected(self):
        logpost = single_study_oracle_logpost(
            y=150, n_patients=300, delta=0.5, phi=0.4, prior=PriorSpec())
        with pytest.raises(GridTooCoarse):
            quadrature_posterior(logpost, [GridAxis(-0.05, 0.05, 400)],
                                 ["log_lambda"])


class TestTwoParameter:
    def test_marginals_and_boundary(self):
        ys = [130, 150, 90, 110, 160, 120]
        ns = [300, 320, 250, 260, 340, 280]
        deltas = [0.5, 0.5, 0.4, 0.5, 0.6, 0.5]
        xs = [-6.0, -3.0, -1.0, 1.0, 3.0, 6.0]
        logpost = fixed_effect_oracle_logpost(ys, ns, deltas, xs, 0.4,
                                              PriorSpec())
        res = quadrature_posterior(
            logpost,
            [GridAxis(-0.4, 0.6, 400), GridAxis(-0.12, 0.12, 400)],
            ["beta0", "beta1"])
        assert res.mass.sum() == pytest.approx(1.0, abs=1e-9)
        med0, lo0, hi0 = res.summary("beta0")
        assert lo0 < med0 < hi0
        med1, lo1, hi1 = res.summary("beta1")
        assert lo1 < med1 < hi1
