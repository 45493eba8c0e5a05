"""Special functions and the Student-t distribution used by the inference layer.

Log-gamma and the regularized incomplete beta are thin validated wrappers over
the standard library and SciPy; the t CDF is built on the incomplete beta and
the t quantile inverts it by exponential bracketing plus bisection, so the
CDF/quantile pair is consistent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from misspec.errors import DomainError

_BISECT_WIDTH = 1e-12


@dataclass(frozen=True)
class StudentT:
    """Student-t distribution with ``dof`` degrees of freedom (any positive real)."""

    dof: float

    def __post_init__(self):
        if not (self.dof > 0.0 and math.isfinite(self.dof)):
            raise DomainError(f"degrees of freedom must be positive, got {self.dof}")


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    if not x > 0.0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def reg_inc_beta(x, a: float, b: float):
    """Regularized incomplete beta function I_x(a, b) for x in [0, 1].

    Accepts a scalar or array ``x``; ``a`` and ``b`` must be positive.
    """
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"reg_inc_beta requires a, b > 0, got a={a}, b={b}")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("reg_inc_beta requires x in [0, 1]")
    out = scipy.special.betainc(a, b, arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def t_cdf(dist: StudentT, x):
    """CDF of the Student-t distribution, exact via the incomplete beta.

    Symmetric by construction: ``t_cdf(x) + t_cdf(-x) == 1`` up to rounding.
    Accepts a scalar or array ``x``.
    """
    nu = dist.dof
    arr = np.asarray(x, dtype=np.float64)
    scalar = np.isscalar(x) or arr.ndim == 0
    arr = np.atleast_1d(arr)
    # I_{nu/(nu + x^2)}(nu/2, 1/2) is twice the upper tail mass at |x|.
    z = nu / (nu + arr * arr)
    tail = 0.5 * scipy.special.betainc(0.5 * nu, 0.5, z)
    out = np.where(arr >= 0.0, 1.0 - tail, tail)
    out = np.where(np.isposinf(arr), 1.0, out)
    out = np.where(np.isneginf(arr), 0.0, out)
    return float(out[0]) if scalar else out


def t_quantile(dist: StudentT, q: float) -> float:
    """Quantile of the Student-t distribution for q in (0, 1).

    Solves ``t_cdf(x) = q`` by doubling an upper bracket and bisecting it to
    width 1e-12.  Robustness is preferred over speed: quantiles are computed
    once per confidence interval.
    """
    if not (0.0 < q < 1.0):
        raise DomainError(f"t_quantile requires q in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    # Work in the upper tail and reflect.
    upper = max(q, 1.0 - q)
    hi = 1.0
    while t_cdf(dist, hi) < upper:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError(f"quantile bracket overflow for q={q}, dof={dist.dof}")
    lo = 0.0
    while hi - lo > _BISECT_WIDTH * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if t_cdf(dist, mid) < upper:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return x if q > 0.5 else -x
