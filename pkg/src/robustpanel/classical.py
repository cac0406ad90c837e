"""Least-squares panel estimators: pooled, between, fixed effects, random effects.

All fits go through one rank-revealing SVD solve with a relative rank tolerance
of 1e-10; explicit inverses are never formed. The random-effects fit runs OLS
on quasi-demeaned data using moment-based variance components estimated from
the within and between fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    NoWithinVariationError,
    RankDeficientError,
    TooFewIndividualsError,
)
from .panel import (
    PanelDataset,
    VarianceComponents,
    between_transform,
    quasi_demean,
    within_transform,
)

RANK_RTOL = 1e-10

KIND_POOLED = "pols"
KIND_BETWEEN = "be"
KIND_FIXED_EFFECTS = "fe"
KIND_RANDOM_EFFECTS = "re"


@dataclass(frozen=True)
class EstimatorFit:
    """Result of one panel regression.

    ``beta`` holds the intercept first when the model includes one, followed by
    the K slope coefficients. ``residuals`` and ``weights`` are per row of the
    transformed regression; classical fits carry unit weights.
    """

    beta: np.ndarray
    std_errors: np.ndarray
    residuals: np.ndarray
    sigma_hat: float
    weights: np.ndarray
    estimator_kind: str
    n_obs_effective: int
    df_resid: int
    intercept: bool

    @property
    def slopes(self) -> np.ndarray:
        """Coefficients on the regressors, excluding any intercept."""
        return self.beta[1:] if self.intercept else self.beta

    @property
    def slope_std_errors(self) -> np.ndarray:
        return self.std_errors[1:] if self.intercept else self.std_errors

    def term_names(self) -> list[str]:
        k = len(self.slopes)
        names = [f"x{j + 1}" for j in range(k)]
        return ["const"] + names if self.intercept else names


def solve_ols(y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve min ||y - X b|| by SVD; return (beta, diagonal of (X'X)^-1).

    Raises ``RankDeficientError`` when the smallest singular value is below
    ``RANK_RTOL`` times the largest.
    """
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    if s[0] == 0.0 or s[-1] < RANK_RTOL * s[0]:
        raise RankDeficientError(
            f"design of shape {x.shape} is rank deficient "
            f"(singular value ratio {0.0 if s[0] == 0 else s[-1] / s[0]:.2e})"
        )
    beta = vt.T @ ((u.T @ y) / s)
    xtx_inv_diag = ((vt.T / s) ** 2).sum(axis=1)
    return beta, xtx_inv_diag


def _finish_fit(
    y: np.ndarray,
    x: np.ndarray,
    kind: str,
    df_resid: int,
    intercept: bool,
) -> EstimatorFit:
    beta, xtx_inv_diag = solve_ols(y, x)
    residuals = y - x @ beta
    rss = float(residuals @ residuals)
    sigma2 = rss / df_resid
    return EstimatorFit(
        beta=beta,
        std_errors=np.sqrt(sigma2 * xtx_inv_diag),
        residuals=residuals,
        sigma_hat=float(np.sqrt(sigma2)),
        weights=np.ones(len(y)),
        estimator_kind=kind,
        n_obs_effective=len(y),
        df_resid=df_resid,
        intercept=intercept,
    )


def add_intercept(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Prepend a constant column (``scale`` supports quasi-demeaned intercepts)."""
    return np.column_stack([np.full(x.shape[0], scale), x])


def fit_pooled_ols(p: PanelDataset) -> EstimatorFit:
    """OLS with intercept on the stacked NT rows, ignoring the panel structure."""
    x = add_intercept(p.x)
    df = p.n_rows - x.shape[1]
    return _finish_fit(p.y, x, KIND_POOLED, df, intercept=True)


def fit_between(p: PanelDataset) -> EstimatorFit:
    """OLS with intercept on the N rows of per-individual time averages."""
    n, k = p.n_individuals, p.n_regressors
    if n <= k + 1:
        raise TooFewIndividualsError(
            f"between regression needs N > K+1, got N={n}, K={k}"
        )
    tr = between_transform(p)
    x = add_intercept(tr.x_star)
    return _finish_fit(tr.y_star, x, KIND_BETWEEN, n - (k + 1), intercept=True)


def check_within_variation(x_within: np.ndarray, x_original: np.ndarray) -> None:
    """Raise ``NoWithinVariationError`` if a demeaned column is numerically zero."""
    scale = np.maximum(np.abs(x_original).max(axis=0), 1.0)
    dead = np.abs(x_within).max(axis=0) <= 1e-10 * scale
    if dead.any():
        j = int(np.flatnonzero(dead)[0])
        raise NoWithinVariationError(
            f"regressor x{j + 1} has no within variation (constant over time "
            "for every individual)"
        )


def fit_fixed_effects(p: PanelDataset) -> EstimatorFit:
    """OLS without intercept on time-demeaned data.

    Degrees of freedom are NT - N - K: one absorbed mean per individual on top
    of the K slopes.
    """
    tr = within_transform(p)
    check_within_variation(tr.x_star, p.x)
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    df = n * t - n - k
    return _finish_fit(tr.y_star, tr.x_star, KIND_FIXED_EFFECTS, df, intercept=False)


def estimate_variance_components(p: PanelDataset) -> VarianceComponents:
    """Moment estimates of the error variances from the within and between fits.

    The idiosyncratic variance is the within residual mean square; the effect
    variance is the between residual mean square minus its share of the
    idiosyncratic part, clamped at zero.
    """
    fe = fit_fixed_effects(p)
    be = fit_between(p)
    t = p.n_periods
    # Residual mean squares at rounding-noise level are exact fits.
    floor = (1e-10 * max(1.0, float(np.abs(p.y).max()))) ** 2
    sigma2_eps = fe.sigma_hat**2
    between_ms = be.sigma_hat**2
    if sigma2_eps < floor:
        sigma2_eps = 0.0
    if between_ms < floor:
        between_ms = 0.0
    sigma2_alpha = max(0.0, between_ms - sigma2_eps / t)
    return VarianceComponents(
        sigma2_eps=sigma2_eps, sigma2_alpha=sigma2_alpha, n_periods=t
    )


def fit_random_effects(
    p: PanelDataset, vc: VarianceComponents | None = None
) -> EstimatorFit:
    """OLS on quasi-demeaned data; the GLS estimator of the error-components model.

    Variance components are estimated from the data unless supplied. When theta
    is 0 this reduces to the pooled fit; at theta = 1 the scaled intercept
    column vanishes and is dropped, leaving the within regression.
    """
    if vc is None:
        vc = estimate_variance_components(p)
    tr = quasi_demean(p, vc)
    theta = tr.theta
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    if 1.0 - theta <= 1e-12:
        check_within_variation(tr.x_star, p.x)
        df = n * t - n - k
        return _finish_fit(
            tr.y_star, tr.x_star, KIND_RANDOM_EFFECTS, df, intercept=False
        )
    x = add_intercept(tr.x_star, scale=1.0 - theta)
    df = n * t - (k + 1)
    return _finish_fit(tr.y_star, x, KIND_RANDOM_EFFECTS, df, intercept=True)
