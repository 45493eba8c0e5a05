"""Linear minimum-distance model instances and their deterministic estimands.

A model is the observable triple (Y, X, W): a k-vector of moment intercepts,
a k-by-p Jacobian with full column rank, and a symmetric positive definite
k-by-k weighting matrix.  The weighted objective

    Q(theta) = (Y - X theta)' W (Y - X theta)

is minimized at the pseudo-true value, and the minimized value is the
population J-statistic.  ``decompose_eta`` splits the whitened residual into
the detectable component (orthogonal to the whitened Jacobian, driving J) and
the undetectable component (inside its span, driving the gap between true and
pseudo-true parameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from misspec import _linalg
from misspec.errors import InputError, NumericalError

# Negative objective values within this relative band of zero are treated as
# float noise at an exact fit and clamped; anything more negative is a bug.
J_CLAMP_RTOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelInstance:
    """Observable triple (Y, X, W) of a linear minimum-distance problem.

    Construction validates all invariants: W symmetric positive definite,
    X full column rank, k >= p.  Instances are immutable and all operations
    on them are pure functions.
    """

    Y: np.ndarray
    X: np.ndarray
    W: np.ndarray
    _w_factor: _linalg.SpdFactor = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = _linalg.as_matrix(self.X, "X")
        y = _linalg.as_vector(self.Y, x.shape[0], "Y")
        wf = _linalg.spd_factor(self.W, "W")
        if wf.matrix.shape[0] != x.shape[0]:
            raise InputError(
                f"W has dimension {wf.matrix.shape[0]} but X has {x.shape[0]} rows"
            )
        if x.shape[0] < x.shape[1]:
            raise InputError(f"need k >= p, got k={x.shape[0]} < p={x.shape[1]}")
        _linalg.check_full_column_rank(x, "X")
        object.__setattr__(self, "Y", _readonly(y))
        object.__setattr__(self, "X", _readonly(x))
        object.__setattr__(self, "W", _readonly(wf.matrix))
        object.__setattr__(self, "_w_factor", wf)

    @property
    def k(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def w_root(self) -> np.ndarray:
        """Symmetric PSD square root of W."""
        return self._w_factor.root

    @property
    def w_inv_root(self) -> np.ndarray:
        return self._w_factor.inv_root

    def hessian(self) -> np.ndarray:
        """X'WX, one half of the second derivative of the objective."""
        return self.X.T @ self.W @ self.X


@dataclass(frozen=True)
class PseudoTrueResult:
    """Minimizer of the weighted objective together with the minimized value."""

    theta_w: np.ndarray
    j_stat: float
    hessian: np.ndarray


@dataclass(frozen=True)
class EtaDecomposition:
    """Whitened residual split into projection and residual components.

    eta_tilde = eta_hat + eta_perp, with eta_hat in the span of the whitened
    Jacobian and eta_perp orthogonal to it; ||eta_perp||^2 equals the
    J-statistic and does not depend on the theta at which the residual was
    formed.
    """

    eta_tilde: np.ndarray
    eta_hat: np.ndarray
    eta_perp: np.ndarray
    j_stat: float


def implied_eta(model: ModelInstance, theta) -> np.ndarray:
    """Moment value Y - X theta implied by a candidate parameter."""
    theta = _linalg.as_vector(theta, model.p, "theta")
    return model.Y - model.X @ theta


def objective(model: ModelInstance, theta) -> float:
    """Weighted quadratic objective (Y - X theta)' W (Y - X theta)."""
    g = implied_eta(model, theta)
    return float(g @ model.W @ g)


def pseudo_true(model: ModelInstance) -> PseudoTrueResult:
    """Minimize the objective: GLS coefficient of Y on X with weight W.

    The linear system in X'WX is solved by Cholesky factorization rather than
    explicit inversion.  The minimized objective is clamped to zero when it is
    within float noise below zero (exact-fit case); a substantially negative
    value raises :class:`NumericalError`.
    """
    h = model.hessian()
    theta_w = _linalg.spd_solve(h, model.X.T @ (model.W @ model.Y))
    j = objective(model, theta_w)
    if j < 0.0:
        y_scale = float(model.Y @ model.W @ model.Y)
        if j > -J_CLAMP_RTOL * (1.0 + y_scale):
            j = 0.0
        else:
            raise NumericalError(
                f"minimized objective is negative beyond float noise: {j:.3e}"
            )
    return PseudoTrueResult(theta_w=_readonly(theta_w), j_stat=j, hessian=_readonly(h))


def decompose_eta(model: ModelInstance, theta) -> EtaDecomposition:
    """Split the whitened residual at ``theta`` into span and orthogonal parts.

    eta_perp is invariant to ``theta``; its squared length is the J-statistic.
    """
    eta_tilde = model.w_root @ implied_eta(model, theta)
    x_tilde = model.w_root @ model.X
    coef = _linalg.spd_solve(x_tilde.T @ x_tilde, x_tilde.T @ eta_tilde)
    eta_hat = x_tilde @ coef
    eta_perp = eta_tilde - eta_hat
    return EtaDecomposition(
        eta_tilde=_readonly(eta_tilde),
        eta_hat=_readonly(eta_hat),
        eta_perp=_readonly(eta_perp),
        j_stat=float(eta_perp @ eta_perp),
    )


def j_noise_floor(model: ModelInstance) -> float:
    """Scale below which a computed J-statistic is float noise from an exact fit."""
    return J_CLAMP_RTOL * (1.0 + float(model.Y @ model.W @ model.Y))


def sigma_v(model: ModelInstance, v) -> float:
    """sqrt(v' (X'WX)^{-1} v), the Hessian-transformed length of v."""
    v = _linalg.as_vector(v, model.p, "v")
    if not np.any(v != 0.0):
        raise InputError("v must be nonzero")
    return float(np.sqrt(v @ _linalg.spd_solve(model.hessian(), v)))
