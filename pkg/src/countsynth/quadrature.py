"""Grid-quadrature posterior oracle for reduced models.

Used to cross-validate the MCMC engine: a reduced model with one or two free
parameters is integrated numerically on a rectangular grid and its marginal
quantiles are compared against sampler output.  The density here is built on
``scipy.special`` so the oracle shares no probability code with the sampling
kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import GridTooCoarse
from .mcmc import GenericModel
from .model import PriorSpec
from . import kernels


@dataclass(frozen=True)
class GridAxis:
    lo: float
    hi: float
    n: int = 400

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


class QuadratureResult:
    def __init__(self, names: Sequence[str], axes: list[np.ndarray],
                 mass: np.ndarray):
        self.names = list(names)
        self.axes = axes
        self.mass = mass  # normalized cell masses, shape (n1[, n2])

    def marginal(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = self.names.index(name)
        other = tuple(i for i in range(self.mass.ndim) if i != k)
        return self.axes[k], self.mass.sum(axis=other) if other else self.mass

    def quantile(self, name: str, p) -> np.ndarray:
        """Marginal quantile(s) by interpolation of the cumulative mass."""
        x, w = self.marginal(name)
        cdf = np.cumsum(w) - 0.5 * w  # cumulative at cell centers
        return np.interp(np.atleast_1d(p), cdf, x)

    def summary(self, name: str) -> tuple[float, float, float]:
        lo, med, hi = self.quantile(name, [0.025, 0.5, 0.975])
        return float(med), float(lo), float(hi)


def quadrature_posterior(logpost: Callable[..., np.ndarray],
                         axes: Sequence[GridAxis],
                         names: Sequence[str],
                         boundary_tol: float = 1e-6) -> QuadratureResult:
    """Normalize ``logpost`` on a rectangular grid of up to two axes.

    ``logpost`` must accept one broadcastable array per axis.  Raises
    :class:`GridTooCoarse` when more than ``boundary_tol`` of the posterior
    mass sits in the outermost grid cells (the grid is too narrow to trust).
    """
    if not 1 <= len(axes) <= 2:
        raise ValueError("the oracle handles one- or two-parameter models")
    grids = [ax.points() for ax in axes]
    mesh = np.meshgrid(*grids, indexing="ij")
    lp = np.asarray(logpost(*mesh), dtype=float)
    if lp.shape != mesh[0].shape:
        raise ValueError("logpost did not broadcast over the grid")
    lp_max = lp.max()
    if not np.isfinite(lp_max):
        raise ValueError("log-posterior is nowhere finite on the grid")
    w = np.exp(lp - lp_max)
    total = w.sum()
    w /= total

    boundary = np.zeros_like(w, dtype=bool)
    for k in range(w.ndim):
        idx_lo = [slice(None)] * w.ndim
        idx_hi = [slice(None)] * w.ndim
        idx_lo[k] = 0
        idx_hi[k] = -1
        boundary[tuple(idx_lo)] = True
        boundary[tuple(idx_hi)] = True
    edge_mass = float(w[boundary].sum())
    if edge_mass > boundary_tol:
        raise GridTooCoarse(
            f"boundary mass {edge_mass:.3g} exceeds {boundary_tol:g}; "
            "widen the grid")
    return QuadratureResult(names, grids, w)


# ---------------------------------------------------------------------------
# reduced-model densities (scipy side: the oracle)


def _nb_logpmf_ref(y, mu, phi):
    """Reference NB log-pmf on arrays (scipy implementation)."""
    mu = np.asarray(mu, dtype=float)
    if phi == 0.0:
        return special.xlogy(y, mu) - mu - special.gammaln(y + 1.0)
    r = 1.0 / phi
    pm = phi * mu
    return (special.gammaln(y + r) - special.gammaln(r)
            - special.gammaln(y + 1.0)
            - (r + y) * np.log1p(pm) + special.xlogy(y, pm))


def single_study_oracle_logpost(y: int, n_patients: int, delta: float,
                                phi: float,
                                prior: PriorSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Log-posterior of one log-rate for a single total-count study with the
    overdispersion held fixed."""
    def logpost(log_lam):
        log_lam = np.asarray(log_lam, dtype=float)
        mu = n_patients * delta * np.exp(log_lam)
        lp = _nb_logpmf_ref(float(y), mu, phi / n_patients)
        inside = (log_lam >= prior.beta0.lo) & (log_lam <= prior.beta0.hi)
        return np.where(inside, lp - math.log(prior.beta0.hi - prior.beta0.lo),
                        -np.inf)
    return logpost


def fixed_effect_oracle_logpost(ys: Sequence[int], ns: Sequence[int],
                                deltas: Sequence[float], xs: Sequence[float],
                                phi: float, prior: PriorSpec) -> Callable:
    """Log-posterior of (intercept, slope) with zero heterogeneity and the
    overdispersion held fixed; every study contributes a total-count term."""
    ys = [float(v) for v in ys]
    ns = [float(v) for v in ns]
    deltas = [float(v) for v in deltas]
    xs = [float(v) for v in xs]

    def logpost(b0, b1):
        b0 = np.asarray(b0, dtype=float)
        b1 = np.asarray(b1, dtype=float)
        lp = np.zeros(np.broadcast(b0, b1).shape)
        for y, n, d, x in zip(ys, ns, deltas, xs):
            mu = n * d * np.exp(b0 + b1 * x)
            lp = lp + _nb_logpmf_ref(y, mu, phi / n)
        inside = (b0 >= prior.beta0.lo) & (b0 <= prior.beta0.hi)
        lp = np.where(inside, lp - math.log(prior.beta0.hi - prior.beta0.lo),
                      -np.inf)
        z = (b1 - prior.beta_slope.mean) / prior.beta_slope.sd
        lp = lp - 0.5 * z * z - math.log(prior.beta_slope.sd) \
            - 0.5 * math.log(2.0 * math.pi)
        return lp
    return logpost


# ---------------------------------------------------------------------------
# matching sampling models (kernel side: what the MCMC engine sees)


def single_study_sampling_model(y: int, n_patients: int, delta: float,
                                phi: float, prior: PriorSpec,
                                initial: float) -> GenericModel:
    log_phi = math.log(phi) if phi > 0 else -math.inf
    code = kernels.EV_COUNT_ONLY

    def logpost(x):
        ll = float(x[0])
        if not (prior.beta0.lo <= ll <= prior.beta0.hi):
            return -math.inf
        lp = -math.log(prior.beta0.hi - prior.beta0.lo)
        if phi > 0:
            lik = kernels.study_loglik(code, float(y), 0.0, float(n_patients),
                                       delta, ll, log_phi)
        else:
            lik = kernels.nb_log_pmf(float(y), n_patients * delta * math.exp(ll),
                                     0.0)
        return lp + lik

    return GenericModel(["log_lambda"], logpost, [initial])


def fixed_effect_sampling_model(ys, ns, deltas, xs, phi: float,
                                prior: PriorSpec,
                                initial: Sequence[float]) -> GenericModel:
    log_phi = math.log(phi) if phi > 0 else -math.inf
    code = kernels.EV_COUNT_ONLY
    data = [(float(y), float(n), float(d), float(x))
            for y, n, d, x in zip(ys, ns, deltas, xs)]

    def logpost(vec):
        b0, b1 = float(vec[0]), float(vec[1])
        if not (prior.beta0.lo <= b0 <= prior.beta0.hi):
            return -math.inf
        lp = -math.log(prior.beta0.hi - prior.beta0.lo)
        lp += kernels.normal_logpdf(b1, prior.beta_slope.mean,
                                    prior.beta_slope.sd)
        for y, n, d, x in data:
            ll = b0 + b1 * x
            if phi > 0:
                lp += kernels.study_loglik(code, y, 0.0, n, d, ll, log_phi)
            else:
                if ll > 700.0:
                    return -math.inf
                lp += kernels.nb_log_pmf(y, n * d * math.exp(ll), 0.0)
        return lp

    return GenericModel(["beta0", "beta1"], logpost, initial)
