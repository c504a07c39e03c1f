# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled twin of the pure-Python kernels in ``_pure.py``.

Every expression mirrors the pure implementation operation for operation
(same libm calls, same evaluation order, compiled with -ffp-contract=off),
and random numbers come from the same BitGenerator stream, so chains from
the two backends are bit-identical.  Keep the two files in sync.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport (INFINITY, M_PI, cos, exp, expm1, log, log1p, pow,
                        sin, sqrt)
from numpy.random cimport bitgen_t

cdef double NEG_INF = -INFINITY
cdef double TWO_PI = 6.283185307179586
cdef double HALF_LOG_2PI = 0.9189385332046727
cdef double LOG_SQRT_2_OVER_PI = -0.22579135264472744
cdef double MAX_LOG = 700.0
cdef double _LOG_PI = 1.1447298858494002
cdef double _LANCZOS_G = 7.0
cdef double[9] _LANCZOS
_LANCZOS[0] = 0.99999999999980993
_LANCZOS[1] = 676.5203681218851
_LANCZOS[2] = -1259.1392167224028
_LANCZOS[3] = 771.32342877765313
_LANCZOS[4] = -176.61502916214059
_LANCZOS[5] = 12.507343278686905
_LANCZOS[6] = -0.13857109526572012
_LANCZOS[7] = 9.9843695780195716e-6
_LANCZOS[8] = 1.5056327351493116e-7

EV_RATE_SE = 0
EV_COUNT_AND_ZEROS = 1
EV_COUNT_ONLY = 2
EV_ZEROS_ONLY = 3


cdef double _lgamma_pos(double x) noexcept nogil:
    cdef double z, acc, t
    cdef int i
    if x < 0.5:
        return _LOG_PI - log(sin(M_PI * x)) - _lgamma_pos(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS[0]
    for i in range(1, 9):
        acc += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return HALF_LOG_2PI + (z + 0.5) * log(t) - t + log(acc)


cdef double _normal_logpdf(double x, double mean, double sd) noexcept nogil:
    cdef double z
    if sd <= 0.0:
        return NEG_INF
    z = (x - mean) / sd
    return -0.5 * z * z - log(sd) - HALF_LOG_2PI


cdef double _halfnormal_logpdf(double x, double scale) noexcept nogil:
    cdef double z
    if x < 0.0 or scale <= 0.0:
        return NEG_INF
    z = x / scale
    return LOG_SQRT_2_OVER_PI - log(scale) - 0.5 * z * z


cdef double _nb_log_pmf(double y, double mu, double phi,
                        double phi_eps) noexcept nogil:
    cdef double r, pm
    if mu <= 0.0:
        return 0.0 if y == 0.0 else NEG_INF
    if not mu < 1e300:
        return NEG_INF
    if phi < phi_eps:
        return y * log(mu) - mu - _lgamma_pos(y + 1.0)
    r = 1.0 / phi
    pm = phi * mu
    if pm > 1e300:
        return 0.0 if y == 0.0 else NEG_INF
    return (_lgamma_pos(y + r)
            - _lgamma_pos(r)
            - _lgamma_pos(y + 1.0)
            - (r + y) * log1p(pm)
            + y * log(pm))


cdef double _log_zero_prob(double mu, double phi, double phi_eps) noexcept nogil:
    cdef double pm, r
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


cdef double _log_choose(double n, double k) noexcept nogil:
    return _lgamma_pos(n + 1.0) - _lgamma_pos(k + 1.0) - _lgamma_pos(n - k + 1.0)


cdef double _zeros_loglik(double k, double n, double delta, double lam,
                          double phi, double phi_eps) noexcept nogil:
    cdef double logpi, em, log1mpi
    logpi = _log_zero_prob(delta * lam, phi, phi_eps)
    if logpi >= 0.0:
        return 0.0 if k == n else NEG_INF
    em = expm1(logpi)
    if em <= -1.0:
        return 0.0 if k == 0.0 else NEG_INF
    log1mpi = log(-em)
    return _log_choose(n, k) + k * logpi + (n - k) * log1mpi


cdef double _study_loglik(int code, double a, double b, double n, double delta,
                          double log_lambda, double log_phi,
                          double phi_eps, int linear_rate) noexcept nogil:
    cdef double lam, phi
    if log_lambda > MAX_LOG or log_phi > MAX_LOG:
        return NEG_INF
    lam = exp(log_lambda)
    if code == 0:  # EV_RATE_SE
        if linear_rate:
            return _normal_logpdf(a, lam, b)
        return _normal_logpdf(log(a), log_lambda, b / a)
    phi = exp(log_phi)
    if code == 2:  # EV_COUNT_ONLY
        return _nb_log_pmf(a, n * delta * lam, phi / n, phi_eps)
    if code == 3:  # EV_ZEROS_ONLY
        return _zeros_loglik(a, n, delta, lam, phi, phi_eps)
    return (_nb_log_pmf(a, n * delta * lam, phi / n, phi_eps)
            + _zeros_loglik(b, n, delta, lam, phi, phi_eps))


cdef double _draw_normal_c(bitgen_t *bg) noexcept nogil:
    cdef double u1 = bg.next_double(bg.state)
    cdef double u2 = bg.next_double(bg.state)
    return sqrt(-2.0 * log1p(-u1)) * cos(TWO_PI * u2)


# ---------------------------------------------------------------------------
# Python-visible wrappers (same names and defaults as the pure backend)


def lgamma_pos(double x):
    return _lgamma_pos(x)


def normal_logpdf(double x, double mean, double sd):
    return _normal_logpdf(x, mean, sd)


def halfnormal_logpdf(double x, double scale):
    return _halfnormal_logpdf(x, scale)


def poisson_log_pmf(double y, double mu):
    if mu <= 0.0:
        return 0.0 if y == 0.0 else NEG_INF
    return y * log(mu) - mu - _lgamma_pos(y + 1.0)


def nb_log_pmf(double y, double mu, double phi, double phi_eps=1e-8):
    return _nb_log_pmf(y, mu, phi, phi_eps)


def log_zero_prob(double mu, double phi, double phi_eps=1e-8):
    return _log_zero_prob(mu, phi, phi_eps)


def zero_prob(double delta, double lam, double phi, double phi_eps=1e-8):
    return exp(_log_zero_prob(delta * lam, phi, phi_eps))


def zeros_loglik(double k, double n, double delta, double lam, double phi,
                 double phi_eps=1e-8):
    return _zeros_loglik(k, n, delta, lam, phi, phi_eps)


def study_loglik(int code, double a, double b, double n, double delta,
                 double log_lambda, double log_phi, double phi_eps=1e-8,
                 int linear_rate=0):
    return _study_loglik(code, a, b, n, delta, log_lambda, log_phi,
                         phi_eps, linear_rate)


def hier_log_prior(beta, double sigma_lambda, double mu_phi, double sigma_phi,
                   pv):
    cdef double[:] pvv = np.ascontiguousarray(pv, dtype=np.float64)
    cdef double b0 = float(beta[0])
    cdef double lp
    cdef Py_ssize_t j
    if b0 < pvv[0] or b0 > pvv[1]:
        return NEG_INF
    if mu_phi < pvv[5] or mu_phi > pvv[6]:
        return NEG_INF
    if sigma_lambda < 0.0 or sigma_phi < 0.0:
        return NEG_INF
    lp = -log(pvv[1] - pvv[0]) - log(pvv[6] - pvv[5])
    for j in range(1, len(beta)):
        lp += _normal_logpdf(float(beta[j]), pvv[2], pvv[3])
    lp += _halfnormal_logpdf(sigma_lambda, pvv[4])
    lp += _halfnormal_logpdf(sigma_phi, pvv[7])
    return lp


def hier_log_posterior(x, X, ev_code, ev_a, ev_b, n_pat, delta, pv,
                       double phi_eps=1e-8, int linear_rate=0):
    cdef double[:] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int[:] code = np.ascontiguousarray(ev_code, dtype=np.int32)
    cdef double[:] ea = np.ascontiguousarray(ev_a, dtype=np.float64)
    cdef double[:] eb = np.ascontiguousarray(ev_b, dtype=np.float64)
    cdef double[:] npat = np.ascontiguousarray(n_pat, dtype=np.float64)
    cdef double[:] dl = np.ascontiguousarray(delta, dtype=np.float64)
    cdef double[:] pvv = np.ascontiguousarray(pv, dtype=np.float64)

    cdef Py_ssize_t n = code.shape[0]
    cdef Py_ssize_t p = xv.shape[0] - 3 - 2 * n
    cdef Py_ssize_t i, j, base
    cdef double lp, b0, sig_lam, mu_phi, sig_phi, ll, lf, eta

    b0 = xv[0]
    sig_lam = xv[p]
    mu_phi = xv[p + 1]
    sig_phi = xv[p + 2]
    if b0 < pvv[0] or b0 > pvv[1]:
        return NEG_INF
    if mu_phi < pvv[5] or mu_phi > pvv[6]:
        return NEG_INF
    if sig_lam < 0.0 or sig_phi < 0.0:
        return NEG_INF
    lp = -log(pvv[1] - pvv[0]) - log(pvv[6] - pvv[5])
    for j in range(1, p):
        lp += _normal_logpdf(xv[j], pvv[2], pvv[3])
    lp += _halfnormal_logpdf(sig_lam, pvv[4])
    lp += _halfnormal_logpdf(sig_phi, pvv[7])
    if lp == NEG_INF:
        return NEG_INF
    base = p + 3
    for i in range(n):
        ll = xv[base + i]
        lf = xv[base + n + i]
        eta = 0.0
        for j in range(p):
            eta += Xv[i, j] * xv[j]
        lp += _normal_logpdf(ll, eta, sig_lam)
        lp += _normal_logpdf(lf, mu_phi, sig_phi)
        lp += _study_loglik(code[i], ea[i], eb[i], npat[i], dl[i],
                            ll, lf, phi_eps, linear_rate)
    return lp


def run_chain_kernel(rng, X, ev_code, ev_a, ev_b, n_pat, delta, pv,
                     double phi_eps, int linear_rate, x0, log_scales0,
                     int n_adapt, int n_samples, int thin,
                     double target_accept, draws_out, accept_out, scales_out):
    """Compiled adaptive Metropolis-within-Gibbs sweep; see the pure twin."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int[:] code = np.ascontiguousarray(ev_code, dtype=np.int32)
    cdef double[:] ea = np.ascontiguousarray(ev_a, dtype=np.float64)
    cdef double[:] eb = np.ascontiguousarray(ev_b, dtype=np.float64)
    cdef double[:] npat = np.ascontiguousarray(n_pat, dtype=np.float64)
    cdef double[:] dl = np.ascontiguousarray(delta, dtype=np.float64)
    cdef double[:] pvv = np.ascontiguousarray(pv, dtype=np.float64)
    cdef double[:] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[:] ls0 = np.ascontiguousarray(log_scales0, dtype=np.float64)
    cdef double[:, ::1] draws = draws_out
    cdef double[:] acc_out = accept_out
    cdef double[:] sc_out = scales_out

    cdef Py_ssize_t n = code.shape[0]
    cdef Py_ssize_t p = Xv.shape[1] if n > 0 else x0v.shape[0] - 3
    cdef Py_ssize_t dim = p + 3 + 2 * n

    scratch = np.empty(dim, dtype=np.float64)
    cdef double[:] beta = np.empty(p if p > 0 else 1, dtype=np.float64)
    cdef double[:] loglam = np.empty(n if n > 0 else 1, dtype=np.float64)
    cdef double[:] logphi = np.empty(n if n > 0 else 1, dtype=np.float64)
    cdef double[:] eta = np.empty(n if n > 0 else 1, dtype=np.float64)
    cdef double[:] sll = np.empty(n if n > 0 else 1, dtype=np.float64)
    cdef double[:] ls = np.empty(dim, dtype=np.float64)
    cdef long[:] n_acc = np.zeros(dim, dtype=np.int64)

    cdef double sig_lam, mu_phi, sig_phi
    cdef Py_ssize_t i, j, it, k, row
    cdef double e, gamma, z, u, step, cur, prop, dlp, d, e_new, s_new
    cdef double alpha, v
    cdef bint adapting, sampling, accepted
    cdef int status = 0
    cdef Py_ssize_t err_it = 0, err_j = 0
    cdef int total_iters = n_adapt + n_samples

    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(
        rng.bit_generator.capsule, "BitGenerator")

    for j in range(p):
        beta[j] = x0v[j]
    sig_lam = x0v[p]
    mu_phi = x0v[p + 1]
    sig_phi = x0v[p + 2]
    for i in range(n):
        loglam[i] = x0v[p + 3 + i]
        logphi[i] = x0v[p + 3 + n + i]
    for j in range(dim):
        ls[j] = ls0[j]

    with nogil:
        for i in range(n):
            e = 0.0
            for j in range(p):
                e += Xv[i, j] * beta[j]
            eta[i] = e
        for i in range(n):
            sll[i] = _study_loglik(code[i], ea[i], eb[i], npat[i], dl[i],
                                   loglam[i], logphi[i], phi_eps, linear_rate)

        for it in range(1, total_iters + 1):
            adapting = it <= n_adapt
            gamma = pow(<double> it, -0.6) if adapting else 0.0
            sampling = not adapting

            for j in range(dim):
                z = _draw_normal_c(bg)
                u = bg.next_double(bg.state)
                step = exp(ls[j]) * z
                s_new = 0.0

                if j < p:
                    cur = beta[j]
                    prop = cur + step
                    if j == 0:
                        dlp = 0.0 if (pvv[0] <= prop <= pvv[1]) else NEG_INF
                    else:
                        dlp = (_normal_logpdf(prop, pvv[2], pvv[3])
                               - _normal_logpdf(cur, pvv[2], pvv[3]))
                    if dlp != NEG_INF:
                        d = prop - cur
                        for i in range(n):
                            e_new = eta[i] + Xv[i, j] * d
                            dlp += (_normal_logpdf(loglam[i], e_new, sig_lam)
                                    - _normal_logpdf(loglam[i], eta[i], sig_lam))
                elif j == p:
                    cur = sig_lam
                    prop = cur + step
                    dlp = (_halfnormal_logpdf(prop, pvv[4])
                           - _halfnormal_logpdf(cur, pvv[4]))
                    if dlp == dlp and dlp != NEG_INF:
                        for i in range(n):
                            dlp += (_normal_logpdf(loglam[i], eta[i], prop)
                                    - _normal_logpdf(loglam[i], eta[i], sig_lam))
                elif j == p + 1:
                    cur = mu_phi
                    prop = cur + step
                    dlp = 0.0 if (pvv[5] <= prop <= pvv[6]) else NEG_INF
                    if dlp != NEG_INF:
                        for i in range(n):
                            dlp += (_normal_logpdf(logphi[i], prop, sig_phi)
                                    - _normal_logpdf(logphi[i], mu_phi, sig_phi))
                elif j == p + 2:
                    cur = sig_phi
                    prop = cur + step
                    dlp = (_halfnormal_logpdf(prop, pvv[7])
                           - _halfnormal_logpdf(cur, pvv[7]))
                    if dlp == dlp and dlp != NEG_INF:
                        for i in range(n):
                            dlp += (_normal_logpdf(logphi[i], mu_phi, prop)
                                    - _normal_logpdf(logphi[i], mu_phi, sig_phi))
                elif j < p + 3 + n:
                    i = j - (p + 3)
                    cur = loglam[i]
                    prop = cur + step
                    s_new = _study_loglik(code[i], ea[i], eb[i], npat[i],
                                          dl[i], prop, logphi[i], phi_eps,
                                          linear_rate)
                    dlp = (_normal_logpdf(prop, eta[i], sig_lam)
                           - _normal_logpdf(cur, eta[i], sig_lam)
                           + s_new - sll[i])
                else:
                    i = j - (p + 3 + n)
                    cur = logphi[i]
                    prop = cur + step
                    s_new = _study_loglik(code[i], ea[i], eb[i], npat[i],
                                          dl[i], loglam[i], prop, phi_eps,
                                          linear_rate)
                    dlp = (_normal_logpdf(prop, mu_phi, sig_phi)
                           - _normal_logpdf(cur, mu_phi, sig_phi)
                           + s_new - sll[i])

                if dlp != dlp:
                    status = 1
                    err_it = it
                    err_j = j
                    break

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
                            eta[i] += Xv[i, j] * d
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

            if status != 0:
                break

            if sampling:
                k = it - n_adapt
                if k % thin == 0:
                    row = (k // thin) - 1
                    for j in range(p):
                        draws[row, j] = beta[j]
                    draws[row, p] = sig_lam
                    draws[row, p + 1] = mu_phi
                    draws[row, p + 2] = sig_phi
                    for i in range(n):
                        draws[row, p + 3 + i] = loglam[i]
                        draws[row, p + 3 + n + i] = logphi[i]

        for j in range(dim):
            acc_out[j] = (<double> n_acc[j]) / n_samples if n_samples > 0 else 0.0
            sc_out[j] = exp(ls[j])

    if status != 0:
        return status, int(err_it), int(err_j)
    return 0, 0, 0
