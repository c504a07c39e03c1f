"""Probability and sampler kernels, compiled when possible.

At import time the Cython extension ``_core`` is preferred; if it is missing
(no compiler at install time) the pure-Python twin ``_pure`` takes over.  The
two implementations are written to be bit-identical, so which one is active
never changes results, only speed.  Set ``COUNT_SYNTH_BACKEND`` to ``cython``
or ``python`` to force a choice (``cython`` raises if the extension is
unavailable).
"""

import os

from . import _pure

_requested = os.environ.get("COUNT_SYNTH_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "python"):
    raise ValueError(
        f"COUNT_SYNTH_BACKEND must be auto, cython, or python, "
        f"got {_requested!r}")

_impl = _pure
BACKEND = "python"
if _requested in ("auto", "cython"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _pure

EV_RATE_SE = _pure.EV_RATE_SE
EV_COUNT_AND_ZEROS = _pure.EV_COUNT_AND_ZEROS
EV_COUNT_ONLY = _pure.EV_COUNT_ONLY
EV_ZEROS_ONLY = _pure.EV_ZEROS_ONLY

lgamma_pos = _impl.lgamma_pos
normal_logpdf = _impl.normal_logpdf
halfnormal_logpdf = _impl.halfnormal_logpdf
poisson_log_pmf = _impl.poisson_log_pmf
nb_log_pmf = _impl.nb_log_pmf
log_zero_prob = _impl.log_zero_prob
zero_prob = _impl.zero_prob
zeros_loglik = _impl.zeros_loglik
study_loglik = _impl.study_loglik
hier_log_prior = _impl.hier_log_prior
hier_log_posterior = _impl.hier_log_posterior
run_chain_kernel = _impl.run_chain_kernel
draw_normal = _pure._draw_normal  # init-time draws are never hot


def get_backend(name: str):
    """Return a specific backend module ('python' or 'cython')."""
    if name == "python":
        return _pure
    if name == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
