"""Hot Monte Carlo replication kernels with a numba/numpy backend switch.

The replication loops dominate the runtime of the coverage and pivotality
experiments, so they are written once in scalar numpy style and compiled with
``numba.njit`` when available.  Setting the environment variable
``MISSPEC_NUMBA=0`` (or numba being missing) selects the interpreted fallback,
which executes the identical source and produces bit-identical results.

Per-replication draw order is fixed: theta components first (coverage only),
then the misspecification vector; the t radial family draws its chi-square
mixing variable before the normal vector.
"""

from __future__ import annotations

import os

import numpy as np

from misspec._rng import (
    next_chisquare,
    next_exponential,
    next_normal,
    next_u01,
    register_jitable,
    stream_state,
)

ETA_NORMAL = 0
ETA_STUDENT_T = 1
ETA_SHIFTED_EXPONENTIAL = 2

THETA_GAUSSIAN = 0
THETA_TABULATED = 1

_ENV_FLAG = "MISSPEC_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "1").strip().lower() not in ("0", "false", "off")


@register_jitable
def _draw_eta(state, eta_code, nu_tilde, eta_mix, work):
    """Draw eta into ``work[k:2k]`` (using ``work[:k]`` as scratch).

    eta = eta_mix z (scaled) for the elliptical families; the shifted
    exponential control writes independent asymmetric coordinates directly.
    """
    k = eta_mix.shape[0]
    if eta_code == ETA_SHIFTED_EXPONENTIAL:
        for i in range(k):
            e, state = next_exponential(state)
            work[i + k] = e - 1.0
        return state
    scale = 1.0
    if eta_code == ETA_STUDENT_T:
        w, state = next_chisquare(state, nu_tilde)
        scale = np.sqrt(nu_tilde / w)
    for i in range(k):
        z, state = next_normal(state)
        work[i] = z
    for i in range(k):
        acc = 0.0
        for j in range(k):
            acc += eta_mix[i, j] * work[j]
        work[i + k] = acc * scale
    return state


def _coverage_hits(
    seed,
    rep_start,
    rep_stop,
    x_mat,
    eta_mix,
    eta_code,
    nu_tilde,
    theta_code,
    theta_mean,
    theta_sd,
    tab_grid,
    tab_cdf,
    a_v,
    b_mat,
    v,
    sigma_v,
    tstar,
    km_p,
):
    """Count replications whose interval covers v'theta.

    Per replication: draw theta from its prior and eta from the radial prior,
    form Y = X theta + eta, and check |v'theta_W(Y) - v'theta| against the
    J-scaled half-width.  v'theta_W = a_v'Y and J = Y'B Y for precomputed
    projection matrices.
    """
    k = x_mat.shape[0]
    p = x_mat.shape[1]
    theta = np.empty(p)
    work = np.empty(2 * k)
    hits = 0
    for rep in range(rep_start, rep_stop):
        state = stream_state(seed, rep)
        if theta_code == THETA_GAUSSIAN:
            for j in range(p):
                z, state = next_normal(state)
                theta[j] = theta_mean[j] + theta_sd[j] * z
        else:
            u, state = next_u01(state)
            idx = np.searchsorted(tab_cdf, u)
            if idx <= 0:
                theta[0] = tab_grid[0]
            elif idx >= tab_cdf.shape[0]:
                theta[0] = tab_grid[-1]
            else:
                lo, hi = tab_cdf[idx - 1], tab_cdf[idx]
                frac = 0.0 if hi <= lo else (u - lo) / (hi - lo)
                theta[0] = tab_grid[idx - 1] + frac * (tab_grid[idx] - tab_grid[idx - 1])
        state = _draw_eta(state, eta_code, nu_tilde, eta_mix, work)
        # y = X theta + eta, stored in the first half of the work buffer
        for i in range(k):
            acc = work[i + k]
            for j in range(p):
                acc += x_mat[i, j] * theta[j]
            work[i] = acc
        num = 0.0
        for i in range(k):
            num += a_v[i] * work[i]
        jstat = 0.0
        for i in range(k):
            acc = 0.0
            for j in range(k):
                acc += b_mat[i, j] * work[j]
            jstat += work[i] * acc
        if jstat < 0.0:
            jstat = 0.0
        target = 0.0
        for j in range(p):
            target += v[j] * theta[j]
        hw = tstar * np.sqrt(jstat / km_p) * sigma_v
        if abs(num - target) <= hw:
            hits += 1
    return hits


def _pivot_tstats(
    seed,
    rep_start,
    rep_stop,
    eta_mix,
    eta_code,
    nu_tilde,
    a_v,
    b_mat,
    sigma_v,
    km_p,
):
    """Pivotal t statistics per replication; theta-free by construction.

    With Y = X theta + eta the statistic reduces to a_v'eta over the
    studentizer built from eta'B eta, so only eta is drawn.
    """
    k = b_mat.shape[0]
    out = np.empty(rep_stop - rep_start)
    work = np.empty(2 * k)
    for rep in range(rep_start, rep_stop):
        state = stream_state(seed, rep)
        state = _draw_eta(state, eta_code, nu_tilde, eta_mix, work)
        num = 0.0
        for i in range(k):
            num += a_v[i] * work[i + k]
        jstat = 0.0
        for i in range(k):
            acc = 0.0
            for j in range(k):
                acc += b_mat[i, j] * work[j + k]
            jstat += work[i + k] * acc
        out[rep - rep_start] = num / np.sqrt(jstat / km_p * sigma_v * sigma_v)
    return out


_PY_IMPLS = {
    "coverage_hits": _coverage_hits,
    "pivot_tstats": _pivot_tstats,
}

_JIT_IMPLS: dict = {}
NUMBA_AVAILABLE = False
if _numba_requested():
    try:
        import numba

        _JIT_IMPLS = {
            name: numba.njit(cache=True)(impl) for name, impl in _PY_IMPLS.items()
        }
        NUMBA_AVAILABLE = True
    except ImportError:
        _JIT_IMPLS = {}
        NUMBA_AVAILABLE = False


def backend() -> str:
    """Active kernel backend: 'numba' or 'numpy'."""
    return "numba" if NUMBA_AVAILABLE else "numpy"


def _call(name: str, *args, force_backend: str | None = None):
    use = force_backend or backend()
    if use == "numba":
        if not _JIT_IMPLS:
            raise RuntimeError("numba backend requested but not available")
        return _JIT_IMPLS[name](*args)
    # Interpreted uint64 scalar arithmetic wraps as intended but warns.
    with np.errstate(over="ignore"):
        return _PY_IMPLS[name](*args)


def coverage_hits(*args, force_backend: str | None = None) -> int:
    return int(_call("coverage_hits", *args, force_backend=force_backend))


def pivot_tstats(*args, force_backend: str | None = None) -> np.ndarray:
    return _call("pivot_tstats", *args, force_backend=force_backend)
