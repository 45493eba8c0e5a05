"""Posterior distributions for theta under rotation-invariant misspecification priors.

Closed forms cover the normal radial family (Gaussian posterior), the small-c
limit of the t radial family, and the power-law family (both Student-t
posteriors).  Numerical posteriors are computed on one- or two-dimensional
grids in log space with max-subtraction before exponentiation, since the
radial profile evaluated at Q/c underflows catastrophically for small c.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from misspec import _linalg
from misspec.errors import (
    DegenerateLimitError,
    GridError,
    InputError,
    NumericalError,
)
from misspec.model import ModelInstance, j_noise_floor, pseudo_true
from misspec.priors import ContaminatedPrior, PowerLawRadial, ScaledPrior
from misspec.special import StudentT, t_cdf

__all__ = [
    "ThetaPrior",
    "ClosedFormPosterior",
    "GridSpec",
    "GridPosterior",
    "normal_posterior",
    "t_limit_posterior",
    "powerlaw_posterior",
    "grid_posterior",
    "mass_outside_ball",
    "bayes_action_quadratic",
    "bayes_action_grid",
    "tv_distance",
    "posterior_sd",
]


@dataclass(frozen=True)
class ThetaPrior:
    """Prior on theta: flat (on the truncated grid), Gaussian, or tabulated.

    The flat prior is realized as the uniform density on whatever grid the
    posterior is evaluated on; it is only meaningful together with grid
    truncation.
    """

    kind: str
    mean: np.ndarray | None = None
    sd: np.ndarray | None = None
    density_fn: Callable[[np.ndarray], float] | None = None
    grid: np.ndarray | None = None

    @staticmethod
    def flat() -> "ThetaPrior":
        return ThetaPrior(kind="flat")

    @staticmethod
    def gaussian(mean, sd) -> "ThetaPrior":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        sd = np.broadcast_to(np.asarray(sd, dtype=np.float64), mean.shape).copy()
        if np.any(sd <= 0.0):
            raise InputError("Gaussian theta prior requires positive sd")
        return ThetaPrior(kind="gaussian", mean=mean, sd=sd)

    @staticmethod
    def tabulated(
        density_fn: Callable[[np.ndarray], float], grid=None
    ) -> "ThetaPrior":
        """Tabulated density; ``grid`` (p=1 support points) enables sampling."""
        g = None
        if grid is not None:
            g = np.asarray(grid, dtype=np.float64)
            if g.ndim != 1 or g.size < 2 or not np.all(np.diff(g) > 0.0):
                raise InputError("tabulated prior grid must be strictly increasing")
        return ThetaPrior(kind="tabulated", density_fn=density_fn, grid=g)

    def log_density(self, points: np.ndarray) -> np.ndarray:
        """Log prior density at an (m, p) array of theta points."""
        points = np.asarray(points, dtype=np.float64)
        if self.kind == "flat":
            return np.zeros(points.shape[0])
        if self.kind == "gaussian":
            if self.mean.shape[0] != points.shape[1]:
                raise InputError(
                    f"theta prior has dimension {self.mean.shape[0]} "
                    f"but grid points have {points.shape[1]}"
                )
            z = (points - self.mean[None, :]) / self.sd[None, :]
            return -0.5 * np.sum(z * z, axis=1) - np.sum(
                np.log(self.sd * math.sqrt(2.0 * math.pi))
            )
        vals = np.array([float(self.density_fn(pt)) for pt in points])
        if np.any(vals < 0.0):
            raise InputError("tabulated theta prior returned a negative density")
        with np.errstate(divide="ignore"):
            return np.log(vals)


@dataclass(frozen=True)
class ClosedFormPosterior:
    """Gaussian or Student-t posterior descriptor.

    ``scale`` is the covariance matrix for the Gaussian kind and the Student-t
    scale matrix (not the covariance) for the t kind.
    """

    kind: str
    center: np.ndarray
    scale: np.ndarray
    dof: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "student_t"):
            raise InputError(f"unknown posterior kind {self.kind!r}")
        center = _linalg.as_vector(self.center, None, "center")
        sf = _linalg.spd_factor(self.scale, "scale")
        if sf.matrix.shape[0] != center.shape[0]:
            raise InputError("posterior center and scale dimensions disagree")
        if self.kind == "student_t" and not (self.dof is not None and self.dof > 0):
            raise InputError("student_t posterior requires positive dof")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", sf.matrix)
        object.__setattr__(self, "_scale_factor", sf)

    @property
    def p(self) -> int:
        return self.center.shape[0]

    def density(self, points) -> np.ndarray:
        """Posterior density at an (m, p) array (or a single point) of thetas."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = pts[None, :] if single else pts
        sf = self.__dict__["_scale_factor"]
        d = pts - self.center[None, :]
        q = np.einsum("ni,ij,nj->n", d, sf.inverse, d)
        p = self.p
        if self.kind == "gaussian":
            logdens = -0.5 * q - 0.5 * (p * math.log(2.0 * math.pi) + sf.log_det)
        else:
            nu = float(self.dof)
            logdens = (
                math.lgamma(0.5 * (nu + p))
                - math.lgamma(0.5 * nu)
                - 0.5 * p * math.log(nu * math.pi)
                - 0.5 * sf.log_det
                - 0.5 * (nu + p) * np.log1p(q / nu)
            )
        out = np.exp(logdens)
        return float(out[0]) if single else out

    def marginal_sd(self) -> np.ndarray:
        """Marginal standard deviations (infinite for t with dof <= 2)."""
        diag = np.diag(self.scale)
        if self.kind == "gaussian":
            return np.sqrt(diag)
        nu = float(self.dof)
        if nu <= 2.0:
            return np.full(self.p, np.inf)
        return np.sqrt(diag * nu / (nu - 2.0))


def normal_posterior(model: ModelInstance, c: float) -> ClosedFormPosterior:
    """Posterior under the normal radial prior and a flat theta prior.

    Gaussian, centered at the pseudo-true value, covariance c (X'WX)^{-1}.
    """
    if not c > 0.0:
        raise InputError(f"prior scale c must be positive, got {c}")
    pt = pseudo_true(model)
    cov = c * _linalg.spd_solve(pt.hessian, np.eye(model.p))
    return ClosedFormPosterior(kind="gaussian", center=pt.theta_w, scale=cov)


def t_limit_posterior(model: ModelInstance, dof_tilde: float) -> ClosedFormPosterior:
    """Small-c limit posterior under the t radial prior with ``dof_tilde``.

    Student-t with dof = dof_tilde + k - p, centered at the pseudo-true value,
    scale matrix J (dof X'WX)^{-1}.  Requires a strictly positive J.
    """
    if not dof_tilde > 0.0:
        raise InputError(f"dof_tilde must be positive, got {dof_tilde}")
    pt = pseudo_true(model)
    if pt.j_stat <= j_noise_floor(model):
        raise DegenerateLimitError(
            "t-limit posterior requires a positive J-statistic (the limit "
            "formula presumes a detectable misspecification)"
        )
    nu = dof_tilde + model.k - model.p
    scale = pt.j_stat * _linalg.spd_solve(nu * pt.hessian, np.eye(model.p))
    return ClosedFormPosterior(kind="student_t", center=pt.theta_w, scale=scale, dof=nu)


def powerlaw_posterior(model: ModelInstance, alpha: float) -> ClosedFormPosterior:
    """Posterior under the power-law radial prior; identical for every scale c.

    Student-t with dof = 2 alpha - p, centered at the pseudo-true value,
    scale matrix J (dof X'WX)^{-1}.  Requires a strictly positive J.
    """
    nu = 2.0 * alpha - model.p
    if not nu > 0.0:
        raise InputError(f"power-law posterior requires 2*alpha - p > 0, got {nu}")
    pt = pseudo_true(model)
    if pt.j_stat <= j_noise_floor(model):
        raise DegenerateLimitError(
            "power-law posterior requires a positive J-statistic"
        )
    scale = pt.j_stat * _linalg.spd_solve(nu * pt.hessian, np.eye(model.p))
    return ClosedFormPosterior(kind="student_t", center=pt.theta_w, scale=scale, dof=nu)


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry for numerical posteriors: bounds and points per axis.

    ``axes`` overrides bounds/points with explicit (strictly increasing, not
    necessarily uniform) coordinate arrays.
    """

    bounds: Sequence[tuple[float, float]] | None = None
    points: int | Sequence[int] | None = None
    axes: Sequence[np.ndarray] | None = None


@dataclass(frozen=True)
class GridPosterior:
    """Normalized posterior on a rectangular grid over 1 or 2 parameters.

    ``density`` integrates to one by the trapezoidal rule on the grid;
    ``weights`` are the per-point trapezoidal masses and sum to one.
    """

    axes: tuple[np.ndarray, ...]
    log_unnormalized: np.ndarray
    density: np.ndarray
    weights: np.ndarray

    @property
    def p(self) -> int:
        return len(self.axes)

    def points(self) -> np.ndarray:
        """All grid points as an (m, p) array in row-major axis order."""
        if self.p == 1:
            return self.axes[0][:, None]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def mean(self) -> np.ndarray:
        pts = self.points()
        return pts.T @ self.weights.ravel()

    def sd(self) -> np.ndarray:
        pts = self.points()
        w = self.weights.ravel()
        mu = pts.T @ w
        var = (pts * pts).T @ w - mu * mu
        return np.sqrt(np.maximum(var, 0.0))


def _trapz_weights(axis: np.ndarray) -> np.ndarray:
    w = np.zeros_like(axis)
    d = np.diff(axis)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _grid_cell_weights(axes: tuple[np.ndarray, ...]) -> np.ndarray:
    w = _trapz_weights(axes[0])
    if len(axes) == 1:
        return w
    return np.outer(w, _trapz_weights(axes[1]))


def _validate_axis(axis, name: str) -> np.ndarray:
    arr = np.asarray(axis, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise GridError(f"{name} must be a 1-d array with at least 2 points")
    if not np.all(np.diff(arr) > 0.0):
        raise GridError(f"{name} must be strictly increasing")
    return arr


def _normalize_grid(axes: tuple[np.ndarray, ...], logu: np.ndarray) -> GridPosterior:
    logu = np.where(np.isnan(logu), -np.inf, logu)
    peak = float(np.max(logu))
    if not math.isfinite(peak):
        raise NumericalError("posterior mass underflowed everywhere on the grid")
    cell = _grid_cell_weights(axes)
    dens = np.exp(logu - peak)
    total = float(np.sum(cell * dens))
    if not (total > 0.0 and math.isfinite(total)):
        raise NumericalError("grid posterior normalizer is not finite")
    dens = dens / total
    return GridPosterior(
        axes=axes,
        log_unnormalized=logu,
        density=dens,
        weights=cell * dens,
    )


def _default_halfwidths(model: ModelInstance, prior) -> np.ndarray:
    """Half-widths for default grid bounds around the pseudo-true value."""
    pt = pseudo_true(model)
    hinv = _linalg.spd_solve(pt.hessian, np.eye(model.p))
    sig_max = math.sqrt(float(np.max(np.linalg.eigvalsh(hinv))))
    j = pt.j_stat
    kp = model.k - model.p
    hw = 12.0 * math.sqrt(j / kp) * sig_max if (kp > 0 and j > 0.0) else 0.0
    base = prior.base if isinstance(prior, ContaminatedPrior) else prior
    family = base.family
    if isinstance(family, PowerLawRadial):
        floor = 0.0
    else:
        # Scale floor so that J = 0 or k = p fixtures still get a usable grid.
        dof = getattr(family, "dof", None)
        spread = base.c * dof + j if dof is not None else base.c
        floor = 20.0 * math.sqrt(spread * max(np.diag(hinv).max(), 0.0))
    if max(hw, floor) <= 0.0:
        raise GridError(
            "cannot infer default grid bounds (J = 0 with an improper prior); "
            "pass explicit bounds"
        )
    return np.full(model.p, max(hw, floor))


def _resolve_axes(
    model: ModelInstance, prior, spec: GridSpec, theta_w: np.ndarray
) -> tuple[np.ndarray, ...]:
    if spec.axes is not None:
        if len(spec.axes) != model.p:
            raise GridError(f"need {model.p} axes, got {len(spec.axes)}")
        return tuple(_validate_axis(a, f"axis {i}") for i, a in enumerate(spec.axes))
    if spec.bounds is not None:
        bounds = [(float(lo), float(hi)) for lo, hi in spec.bounds]
        if len(bounds) != model.p:
            raise GridError(f"need {model.p} bound pairs, got {len(bounds)}")
    else:
        hws = _default_halfwidths(model, prior)
        bounds = [(tw - hw, tw + hw) for tw, hw in zip(theta_w, hws)]
    if spec.points is None:
        n_points = [2001 if model.p == 1 else 201] * model.p
    elif np.isscalar(spec.points):
        n_points = [int(spec.points)] * model.p
    else:
        n_points = [int(n) for n in spec.points]
    if len(n_points) != model.p or any(n < 2 for n in n_points):
        raise GridError(f"bad grid point counts {n_points}")
    axes = []
    for (lo, hi), n in zip(bounds, n_points):
        if not (hi > lo):
            raise GridError(f"empty grid bounds ({lo}, {hi})")
        axes.append(np.linspace(lo, hi, n))
    return tuple(axes)


def _axes_cover(axes: tuple[np.ndarray, ...], theta: np.ndarray) -> bool:
    return all(a[0] <= t <= a[-1] for a, t in zip(axes, theta))


def grid_posterior(
    model: ModelInstance,
    prior: ScaledPrior | ContaminatedPrior,
    theta_prior: ThetaPrior | None = None,
    spec: GridSpec | None = None,
) -> GridPosterior:
    """Numerical posterior for theta on a grid (p in {1, 2}).

    Pointwise, log posterior = log theta-prior + log prior density of the
    implied moment Y - X theta; the result is normalized by the trapezoidal
    rule.  If the supplied bounds exclude the pseudo-true value the grid is
    expanded once with a warning, then a :class:`GridError` is raised.
    """
    if model.p > 2:
        raise InputError(
            f"numerical posteriors support p in {{1, 2}}, got p={model.p}; "
            "use the closed forms for higher dimensions"
        )
    theta_prior = theta_prior or ThetaPrior.flat()
    spec = spec or GridSpec()
    if prior.k != model.k:
        raise InputError(f"prior dimension {prior.k} does not match model k={model.k}")
    base = prior.base if isinstance(prior, ContaminatedPrior) else prior
    if isinstance(base.family, PowerLawRadial):
        if pseudo_true(model).j_stat <= j_noise_floor(model):
            raise DegenerateLimitError(
                "power-law grid posterior requires a positive J-statistic"
            )
    theta_w = pseudo_true(model).theta_w
    axes = _resolve_axes(model, prior, spec, theta_w)
    if not _axes_cover(axes, theta_w):
        warnings.warn(
            "grid bounds exclude the pseudo-true value; expanding once",
            stacklevel=2,
        )
        expanded = []
        for a, t in zip(axes, theta_w):
            span = a[-1] - a[0]
            lo = min(a[0], t - 0.25 * span)
            hi = max(a[-1], t + 0.25 * span)
            expanded.append(np.linspace(lo, hi, a.size))
        axes = tuple(expanded)
        if not _axes_cover(axes, theta_w):
            raise GridError("grid cannot be expanded to cover the pseudo-true value")

    if len(axes) == 1:
        pts = axes[0][:, None]
        shape = (axes[0].size,)
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        shape = (axes[0].size, axes[1].size)

    etas = model.Y[None, :] - pts @ model.X.T
    if isinstance(prior, ContaminatedPrior):
        log_prior_eta = prior.log_density(etas)
    else:
        log_prior_eta = prior.log_density(
            etas, allow_unnormalized=not prior.proper
        )
    logu = (theta_prior.log_density(pts) + log_prior_eta).reshape(shape)
    return _normalize_grid(axes, logu)


def _gaussian_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def mass_outside_ball(
    post: GridPosterior | ClosedFormPosterior,
    center,
    eps: float,
    norm_matrix: np.ndarray | None = None,
) -> float:
    """Posterior probability of {theta : ||theta - center|| > eps}.

    The default ball is Euclidean; ``norm_matrix`` substitutes the SPD-norm
    ||d|| = sqrt(d' M d) (e.g. M = X'WX).  Computed exactly from the CDF for
    one-dimensional closed forms, by grid summation otherwise.
    """
    if not eps > 0.0:
        raise InputError(f"ball radius must be positive, got {eps}")
    center = _linalg.as_vector(center, None, "center")
    if isinstance(post, GridPosterior):
        pts = post.points()
        d = pts - center[None, :]
        if norm_matrix is None:
            dist2 = np.sum(d * d, axis=1)
        else:
            m = _linalg.spd_factor(norm_matrix, "norm_matrix").matrix
            dist2 = np.einsum("ni,ij,nj->n", d, m, d)
        out = float(np.sum(post.weights.ravel()[dist2 > eps * eps]))
        return min(max(out, 0.0), 1.0)

    if post.p == 1:
        scale = 1.0 if norm_matrix is None else math.sqrt(float(np.asarray(norm_matrix).reshape(())))
        radius = eps / scale
        m = float(post.center[0])
        lo, hi = center[0] - radius, center[0] + radius
        if post.kind == "gaussian":
            sd = math.sqrt(post.scale[0, 0])
            cdf = lambda x: _gaussian_cdf((x - m) / sd)
        else:
            s = math.sqrt(post.scale[0, 0])
            dist = StudentT(float(post.dof))
            cdf = lambda x: float(t_cdf(dist, (x - m) / s))
        return min(max(cdf(lo) + 1.0 - cdf(hi), 0.0), 1.0)
    if post.p == 2:
        # Densify on an internal grid wide enough to capture the tails.
        sds = post.marginal_sd()
        if not np.all(np.isfinite(sds)):
            raise InputError(
                "mass_outside_ball for p=2 closed forms requires finite variance"
            )
        axes = tuple(
            np.linspace(c0 - 12.0 * s, c0 + 12.0 * s, 401)
            for c0, s in zip(post.center, sds)
        )
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        dens = post.density(pts).reshape(axes[0].size, axes[1].size)
        grid = GridPosterior(
            axes=axes,
            log_unnormalized=np.log(np.maximum(dens, 1e-300)),
            density=dens,
            weights=_grid_cell_weights(axes) * dens,
        )
        return mass_outside_ball(grid, center, eps, norm_matrix)
    raise InputError("mass_outside_ball supports closed forms only for p <= 2")


def bayes_action_quadratic(post: GridPosterior | ClosedFormPosterior) -> np.ndarray:
    """Posterior mean, the Bayes action under quadratic loss."""
    if isinstance(post, GridPosterior):
        return post.mean()
    if post.kind == "student_t" and float(post.dof) <= 1.0:
        raise InputError(
            f"posterior mean does not exist for t posterior with dof={post.dof}"
        )
    return post.center.copy()


def bayes_action_grid(
    post: GridPosterior,
    actions: Sequence[float],
    loss: Callable[[float, np.ndarray], float],
) -> float:
    """Minimize posterior expected loss over a finite action list.

    Ties are broken toward the smallest action.  The loss is called as
    ``loss(action, theta)`` with theta a length-p point; vectorized losses
    accepting an (m, p) array are used when available.
    """
    if len(actions) == 0:
        raise InputError("action list must be nonempty")
    acts = np.sort(np.asarray(actions, dtype=np.float64))
    pts = post.points()
    w = post.weights.ravel()

    def _risk(a: float) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            try:
                vals = np.asarray(loss(a, pts), dtype=np.float64)
                if vals.shape == (pts.shape[0],):
                    return float(vals @ w)
            except Exception:  # noqa: BLE001 - fall back to pointwise calls
                pass
        return float(np.array([float(loss(a, pt)) for pt in pts]) @ w)

    risks = np.array([_risk(float(a)) for a in acts])
    return float(acts[int(np.argmin(risks))])


def tv_distance(a: GridPosterior, b: GridPosterior) -> float:
    """Total variation distance between two grid posteriors on identical grids."""
    if a.p != b.p or any(
        ax.shape != bx.shape or not np.array_equal(ax, bx)
        for ax, bx in zip(a.axes, b.axes)
    ):
        raise InputError("tv_distance requires identical grids")
    cell = _grid_cell_weights(a.axes)
    return float(0.5 * np.sum(cell * np.abs(a.density - b.density)))


def posterior_sd(post: GridPosterior | ClosedFormPosterior) -> np.ndarray:
    """Marginal posterior standard deviations."""
    if isinstance(post, GridPosterior):
        return post.sd()
    return post.marginal_sd()
