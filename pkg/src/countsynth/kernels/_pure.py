"""Pure-Python twin of the compiled probability/sampler kernels.

Every function here mirrors its counterpart in ``_core.pyx`` operation for
operation: same expressions, same evaluation order, same libm calls, and the
same random-number consumption.  With the extension compiled via
``-ffp-contract=off`` the two backends produce bit-identical chains, which is
what the backend-equivalence tests assert.

Kernels are *total*: invalid or overflowing inputs yield ``-inf`` (an
impossible state) rather than raising, so a Metropolis proposal into a bad
region is simply rejected.  Argument validation with real exceptions lives in
the public wrappers in :mod:`countsynth.model`.
"""

from __future__ import annotations

import math
from math import cos, exp, expm1, log, log1p, sqrt

NEG_INF = float("-inf")
TWO_PI = 6.283185307179586
HALF_LOG_2PI = 0.9189385332046727  # log(2*pi)/2
LOG_SQRT_2_OVER_PI = -0.22579135264472744  # log(sqrt(2/pi)), half-normal constant
MAX_LOG = 700.0  # beyond this, exp() overflows double precision

# Lanczos approximation, g = 7, 9 coefficients.  Relative error below 1e-13
# over the positive axis, which clears the 1e-12 requirement on log-Gamma.
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_LOG_PI = 1.1447298858494002


def lgamma_pos(x: float) -> float:
    """log Gamma(x) for x > 0 via the Lanczos series (reflection below 0.5)."""
    if x < 0.5:
        # log(pi / sin(pi x)) - lgamma(1 - x); sin(pi x) > 0 on (0, 0.5)
        return _LOG_PI - log(math.sin(math.pi * x)) - lgamma_pos(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS[0]
    for i in range(1, 9):
        acc += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return HALF_LOG_2PI + (z + 0.5) * log(t) - t + log(acc)


def normal_logpdf(x: float, mean: float, sd: float) -> float:
    if sd <= 0.0:
        return NEG_INF
    z = (x - mean) / sd
    return -0.5 * z * z - log(sd) - HALF_LOG_2PI


def halfnormal_logpdf(x: float, scale: float) -> float:
    if x < 0.0 or scale <= 0.0:
        return NEG_INF
    z = x / scale
    return LOG_SQRT_2_OVER_PI - log(scale) - 0.5 * z * z


def poisson_log_pmf(y: float, mu: float) -> float:
    if mu <= 0.0:
        return 0.0 if y == 0.0 else NEG_INF
    return y * log(mu) - mu - lgamma_pos(y + 1.0)


def nb_log_pmf(y: float, mu: float, phi: float, phi_eps: float = 1e-8) -> float:
    """log P(Y = y) for the mean/overdispersion negative binomial.

    Mean ``mu``, variance ``mu * (1 + phi * mu)``; equivalently size
    ``1/phi`` and success probability ``1/(1 + phi*mu)``.  Below ``phi_eps``
    the Poisson limit is evaluated instead, avoiding the cancellation in
    ``log1p(phi*mu)/phi``.
    """
    if mu <= 0.0:
        return 0.0 if y == 0.0 else NEG_INF
    if not mu < 1e300:  # inf or NaN mean: impossible state
        return NEG_INF
    if phi < phi_eps:
        return y * log(mu) - mu - lgamma_pos(y + 1.0)
    r = 1.0 / phi
    pm = phi * mu
    if pm > 1e300:  # phi -> inf limit: all mass at zero
        return 0.0 if y == 0.0 else NEG_INF
    return (
        lgamma_pos(y + r)
        - lgamma_pos(r)
        - lgamma_pos(y + 1.0)
        - (r + y) * log1p(pm)
        + y * log(pm)
    )


def log_zero_prob(mu: float, phi: float, phi_eps: float = 1e-8) -> float:
    """log of the zero-count probability, the y = 0 term of ``nb_log_pmf``."""
    if mu <= 0.0:
        return 0.0
    if not mu < 1e300:
        return NEG_INF
    if phi < phi_eps:
        return -mu
    pm = phi * mu
    if pm > 1e300:
        return 0.0
    r = 1.0 / phi
    return -(r * log1p(pm))


def zero_prob(delta: float, lam: float, phi: float, phi_eps: float = 1e-8) -> float:
    """P(zero events) for one patient observed delta years at rate lam."""
    return exp(log_zero_prob(delta * lam, phi, phi_eps))


def log_choose(n: float, k: float) -> float:
    return lgamma_pos(n + 1.0) - lgamma_pos(k + 1.0) - lgamma_pos(n - k + 1.0)


def zeros_loglik(k: float, n: float, delta: float, lam: float, phi: float,
                 phi_eps: float = 1e-8) -> float:
    """Binomial log-pmf of k zero-event patients out of n.

    Success probability is the per-patient zero probability; its log is taken
    analytically so extreme rates do not round through 0 or 1.
    """
    logpi = log_zero_prob(delta * lam, phi, phi_eps)
    if logpi >= 0.0:  # zero probability is exactly 1
        return 0.0 if k == n else NEG_INF
    em = expm1(logpi)  # in (-1, 0)
    if em <= -1.0:  # zero probability rounded to 0
        return 0.0 if k == 0.0 else NEG_INF
    log1mpi = log(-em)
    return log_choose(n, k) + k * logpi + (n - k) * log1mpi


# Evidence variant codes shared with the data layer.
EV_RATE_SE = 0
EV_COUNT_AND_ZEROS = 1
EV_COUNT_ONLY = 2
EV_ZEROS_ONLY = 3


def study_loglik(code: int, a: float, b: float, n: float, delta: float,
                 log_lambda: float, log_phi: float,
                 phi_eps: float = 1e-8, linear_rate: int = 0) -> float:
    """Log-likelihood contribution of one study given its latent effects.

    ``(a, b)`` hold the evidence payload: (rate, se) for EV_RATE_SE,
    (total events, zero patients) for EV_COUNT_AND_ZEROS, (total events, -)
    for EV_COUNT_ONLY, (zero patients, -) for EV_ZEROS_ONLY.  ``delta`` is the
    per-patient exposure in years.  ``linear_rate`` switches the reported-rate
    likelihood from the default log-scale normal to a linear-scale normal.
    """
    if log_lambda > MAX_LOG or log_phi > MAX_LOG:
        return NEG_INF
    lam = exp(log_lambda)
    if code == EV_RATE_SE:
        if linear_rate:
            return normal_logpdf(a, lam, b)
        return normal_logpdf(log(a), log_lambda, b / a)
    phi = exp(log_phi)
    if code == EV_COUNT_ONLY:
        return nb_log_pmf(a, n * delta * lam, phi / n, phi_eps)
    if code == EV_ZEROS_ONLY:
        return zeros_loglik(a, n, delta, lam, phi, phi_eps)
    # EV_COUNT_AND_ZEROS: composite of the two marginal terms
    return (nb_log_pmf(a, n * delta * lam, phi / n, phi_eps)
            + zeros_loglik(b, n, delta, lam, phi, phi_eps))


# Prior parameter vector layout (see model.PriorSpec.as_vector):
# [beta0_lo, beta0_hi, slope_mean, slope_sd, sig_lam_scale,
#  mu_phi_lo, mu_phi_hi, sig_phi_scale]


def hier_log_prior(beta, sigma_lambda: float, mu_phi: float, sigma_phi: float,
                   pv) -> float:
    """Joint log-prior of the hyperparameters; -inf outside the support."""
    if beta[0] < pv[0] or beta[0] > pv[1]:
        return NEG_INF
    if mu_phi < pv[5] or mu_phi > pv[6]:
        return NEG_INF
    if sigma_lambda < 0.0 or sigma_phi < 0.0:
        return NEG_INF
    lp = -log(pv[1] - pv[0]) - log(pv[6] - pv[5])
    for j in range(1, len(beta)):
        lp += normal_logpdf(beta[j], pv[2], pv[3])
    lp += halfnormal_logpdf(sigma_lambda, pv[4])
    lp += halfnormal_logpdf(sigma_phi, pv[7])
    return lp


def hier_log_posterior(x, X, ev_code, ev_a, ev_b, n_pat, delta, pv,
                       phi_eps: float = 1e-8, linear_rate: int = 0) -> float:
    """Full joint log-posterior at packed state ``x``.

    Layout of ``x``: p regression coefficients, sigma_lambda, mu_phi,
    sigma_phi, then n log-rates and n log-overdispersions.
    """
    n = len(ev_code)
    p = len(x) - 3 - 2 * n
    beta = [float(x[j]) for j in range(p)]
    sig_lam = float(x[p])
    mu_phi = float(x[p + 1])
    sig_phi = float(x[p + 2])
    lp = hier_log_prior(beta, sig_lam, mu_phi, sig_phi, pv)
    if lp == NEG_INF:
        return NEG_INF
    base = p + 3
    for i in range(n):
        ll = float(x[base + i])
        lf = float(x[base + n + i])
        eta = 0.0
        for j in range(p):
            eta += X[i][j] * beta[j]
        lp += normal_logpdf(ll, eta, sig_lam)
        lp += normal_logpdf(lf, mu_phi, sig_phi)
        lp += study_loglik(ev_code[i], ev_a[i], ev_b[i], n_pat[i], delta[i],
                           ll, lf, phi_eps, linear_rate)
    return lp


def _draw_normal(rng) -> float:
    # Box-Muller from two uniforms; both backends consume the stream the
    # same way, which a ziggurat draw would not guarantee.
    u1 = rng.random()
    u2 = rng.random()
    return sqrt(-2.0 * log1p(-u1)) * cos(TWO_PI * u2)


def run_chain_kernel(rng, X, ev_code, ev_a, ev_b, n_pat, delta, pv,
                     phi_eps, linear_rate, x0, log_scales0,
                     n_adapt, n_samples, thin, target_accept,
                     draws_out, accept_out, scales_out):
    """Adaptive Metropolis-within-Gibbs sweep over all coordinates.

    One iteration updates every coordinate once (Gaussian random-walk, one
    normal + one uniform consumed per coordinate, in a fixed order).  During
    the first ``n_adapt`` iterations each log proposal scale follows a
    Robbins-Monro recursion toward ``target_accept``; scales are frozen
    afterwards and only post-adaptation draws are stored (every ``thin``-th).

    Returns ``(status, iteration, coordinate)`` where status 0 is success and
    1 flags a NaN in an acceptance ratio.
    """
    n = len(ev_code)
    p = len(X[0]) if n else len(x0) - 3
    dim = p + 3 + 2 * n

    Xl = [[float(X[i][j]) for j in range(p)] for i in range(n)]
    code = [int(ev_code[i]) for i in range(n)]
    ea = [float(ev_a[i]) for i in range(n)]
    eb = [float(ev_b[i]) for i in range(n)]
    npat = [float(n_pat[i]) for i in range(n)]
    dl = [float(delta[i]) for i in range(n)]

    beta = [float(x0[j]) for j in range(p)]
    sig_lam = float(x0[p])
    mu_phi = float(x0[p + 1])
    sig_phi = float(x0[p + 2])
    loglam = [float(x0[p + 3 + i]) for i in range(n)]
    logphi = [float(x0[p + 3 + n + i]) for i in range(n)]

    ls = [float(log_scales0[j]) for j in range(dim)]
    n_acc = [0] * dim

    # caches
    eta = [0.0] * n
    for i in range(n):
        e = 0.0
        for j in range(p):
            e += Xl[i][j] * beta[j]
        eta[i] = e
    sll = [study_loglik(code[i], ea[i], eb[i], npat[i], dl[i],
                        loglam[i], logphi[i], phi_eps, linear_rate)
           for i in range(n)]

    total_iters = n_adapt + n_samples
    rnd = rng.random
    for it in range(1, total_iters + 1):
        adapting = it <= n_adapt
        gamma = pow(float(it), -0.6) if adapting else 0.0
        sampling = not adapting

        for j in range(dim):
            z = _draw_normal(rng)
            u = rnd()
            step = exp(ls[j]) * z

            if j < p:  # regression coefficient
                cur = beta[j]
                prop = cur + step
                if j == 0:
                    dlp = 0.0 if (pv[0] <= prop <= pv[1]) else NEG_INF
                else:
                    dlp = (normal_logpdf(prop, pv[2], pv[3])
                           - normal_logpdf(cur, pv[2], pv[3]))
                if dlp != NEG_INF:
                    d = prop - cur
                    for i in range(n):
                        e_new = eta[i] + Xl[i][j] * d
                        dlp += (normal_logpdf(loglam[i], e_new, sig_lam)
                                - normal_logpdf(loglam[i], eta[i], sig_lam))
            elif j == p:  # sigma_lambda
                cur = sig_lam
                prop = cur + step
                dlp = (halfnormal_logpdf(prop, pv[4])
                       - halfnormal_logpdf(cur, pv[4]))
                if dlp == dlp and dlp != NEG_INF:
                    for i in range(n):
                        dlp += (normal_logpdf(loglam[i], eta[i], prop)
                                - normal_logpdf(loglam[i], eta[i], sig_lam))
            elif j == p + 1:  # mu_phi
                cur = mu_phi
                prop = cur + step
                dlp = 0.0 if (pv[5] <= prop <= pv[6]) else NEG_INF
                if dlp != NEG_INF:
                    for i in range(n):
                        dlp += (normal_logpdf(logphi[i], prop, sig_phi)
                                - normal_logpdf(logphi[i], mu_phi, sig_phi))
            elif j == p + 2:  # sigma_phi
                cur = sig_phi
                prop = cur + step
                dlp = (halfnormal_logpdf(prop, pv[7])
                       - halfnormal_logpdf(cur, pv[7]))
                if dlp == dlp and dlp != NEG_INF:
                    for i in range(n):
                        dlp += (normal_logpdf(logphi[i], mu_phi, prop)
                                - normal_logpdf(logphi[i], mu_phi, sig_phi))
            elif j < p + 3 + n:  # log_lambda[i]
                i = j - (p + 3)
                cur = loglam[i]
                prop = cur + step
                s_new = study_loglik(code[i], ea[i], eb[i], npat[i], dl[i],
                                     prop, logphi[i], phi_eps, linear_rate)
                dlp = (normal_logpdf(prop, eta[i], sig_lam)
                       - normal_logpdf(cur, eta[i], sig_lam)
                       + s_new - sll[i])
            else:  # log_phi[i]
                i = j - (p + 3 + n)
                cur = logphi[i]
                prop = cur + step
                s_new = study_loglik(code[i], ea[i], eb[i], npat[i], dl[i],
                                     loglam[i], prop, phi_eps, linear_rate)
                dlp = (normal_logpdf(prop, mu_phi, sig_phi)
                       - normal_logpdf(cur, mu_phi, sig_phi)
                       + s_new - sll[i])

            if dlp != dlp:  # NaN
                return 1, it, j

            if dlp >= 0.0:
                accepted = True
                alpha = 1.0
            else:
                alpha = exp(dlp)
                accepted = u < alpha

            if accepted:
                if j < p:
                    d = prop - beta[j]
                    beta[j] = prop
                    for i in range(n):
                        eta[i] += Xl[i][j] * d
                elif j == p:
                    sig_lam = prop
                elif j == p + 1:
                    mu_phi = prop
                elif j == p + 2:
                    sig_phi = prop
                elif j < p + 3 + n:
                    i = j - (p + 3)
                    loglam[i] = prop
                    sll[i] = s_new
                else:
                    i = j - (p + 3 + n)
                    logphi[i] = prop
                    sll[i] = s_new
                if sampling:
                    n_acc[j] += 1

            if adapting:
                v = ls[j] + gamma * (alpha - target_accept)
                if v < -15.0:
                    v = -15.0
                elif v > 5.0:
                    v = 5.0
                ls[j] = v

        if sampling:
            k = it - n_adapt
            if k % thin == 0:
                row = (k // thin) - 1
                out = draws_out[row]
                for j in range(p):
                    out[j] = beta[j]
                out[p] = sig_lam
                out[p + 1] = mu_phi
                out[p + 2] = sig_phi
                for i in range(n):
                    out[p + 3 + i] = loglam[i]
                    out[p + 3 + n + i] = logphi[i]

    for j in range(dim):
        accept_out[j] = n_acc[j] / n_samples if n_samples > 0 else 0.0
        scales_out[j] = exp(ls[j])
    return 0, 0, 0
