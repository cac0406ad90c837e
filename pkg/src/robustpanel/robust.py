"""Weighted-likelihood counterparts of the four least-squares panel estimators.

Each estimator applies the root-searching weighted solver to the same
transformed data its classical counterpart regresses on. With the identity
RAF every weight is 1 and each fit collapses to its classical twin. When the
solver finds no converged root the classical fit is returned with the
``fallback`` flag set instead of aborting, so simulation batches always
complete.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import (
    EstimatorFit,
    add_intercept,
    check_within_variation,
    fit_between,
    fit_fixed_effects,
    fit_pooled_ols,
    fit_random_effects,
    solve_ols,
)
from .exceptions import NoConvergedRootError, TooFewIndividualsError
from .panel import (
    PanelDataset,
    VarianceComponents,
    between_transform,
    quasi_demean,
    within_transform,
)
from .wle import WleConfig, WleSolution, solve_wle

KIND_WPOLS = "wpols"
KIND_WBE = "wbe"
KIND_WFE = "wfe"
KIND_WRE = "wre"


@dataclass(frozen=True)
class RobustFit(EstimatorFit):
    """Weighted fit: the usual regression surface plus the solver's solution.

    ``theta_used`` records the quasi-demeaning coefficient for the weighted
    random-effects fit; ``fallback`` marks fits where no root converged and the
    classical estimate was substituted.
    """

    wle: WleSolution | None = None
    theta_used: float | None = None
    fallback: bool = False


def _weighted_fit(
    y: np.ndarray,
    x: np.ndarray,
    sol: WleSolution,
    kind: str,
    df_model: int,
    intercept: bool,
    theta_used: float | None = None,
) -> RobustFit:
    """Wrap a solver solution in the regression-fit surface.

    Standard errors use the weighted least-squares formula with the residual
    scale computed on the weighted degrees of freedom: the weight total minus
    the absorbed parameter count, which matches the classical formula when all
    weights are 1.
    """
    w = sol.weights
    residuals = y - x @ sol.beta
    df = max(float(w.sum()) - df_model, 1.0)
    sigma2 = float(w @ (residuals * residuals)) / df
    sw = np.sqrt(w)
    _, xtwx_inv_diag = solve_ols(sw * y, x * sw[:, None])
    return RobustFit(
        beta=sol.beta,
        std_errors=np.sqrt(sigma2 * xtwx_inv_diag),
        residuals=residuals,
        sigma_hat=float(np.sqrt(sigma2)),
        weights=w,
        estimator_kind=kind,
        n_obs_effective=len(y),
        df_resid=int(df),
        intercept=intercept,
        wle=sol,
        theta_used=theta_used,
    )


def _fallback_fit(classical: EstimatorFit, kind: str, theta_used: float | None = None) -> RobustFit:
    return RobustFit(
        beta=classical.beta,
        std_errors=classical.std_errors,
        residuals=classical.residuals,
        sigma_hat=classical.sigma_hat,
        weights=classical.weights,
        estimator_kind=kind,
        n_obs_effective=classical.n_obs_effective,
        df_resid=classical.df_resid,
        intercept=classical.intercept,
        wle=None,
        theta_used=theta_used,
        fallback=True,
    )


def fit_wpols(p: PanelDataset, cfg: WleConfig) -> RobustFit:
    """Weighted pooled regression on the intercept-augmented stacked rows."""
    x = add_intercept(p.x)
    try:
        sol = solve_wle(p.y, x, cfg)
    except NoConvergedRootError:
        return _fallback_fit(fit_pooled_ols(p), KIND_WPOLS)
    return _weighted_fit(p.y, x, sol, KIND_WPOLS, x.shape[1], intercept=True)


def fit_wbe(p: PanelDataset, cfg: WleConfig) -> RobustFit:
    """Weighted between regression on the N rows of time averages."""
    n, k = p.n_individuals, p.n_regressors
    if n <= k + 1:
        raise TooFewIndividualsError(
            f"between regression needs N > K+1, got N={n}, K={k}"
        )
    tr = between_transform(p)
    x = add_intercept(tr.x_star)
    try:
        sol = solve_wle(tr.y_star, x, cfg)
    except NoConvergedRootError:
        return _fallback_fit(fit_between(p), KIND_WBE)
    return _weighted_fit(tr.y_star, x, sol, KIND_WBE, x.shape[1], intercept=True)


def fit_wfe(p: PanelDataset, cfg: WleConfig) -> RobustFit:
    """Weighted fixed-effects regression on time-demeaned data, no intercept.

    The residual scale uses the within degrees of freedom (weight total minus
    N absorbed means minus K slopes).
    """
    tr = within_transform(p)
    check_within_variation(tr.x_star, p.x)
    n, k = p.n_individuals, p.n_regressors
    try:
        sol = solve_wle(tr.y_star, tr.x_star, cfg)
    except NoConvergedRootError:
        return _fallback_fit(fit_fixed_effects(p), KIND_WFE)
    return _weighted_fit(
        tr.y_star, tr.x_star, sol, KIND_WFE, n + k, intercept=False
    )


def robust_variance_components(
    wfe: RobustFit, wbe: RobustFit, p: PanelDataset
) -> VarianceComponents:
    """Moment variance components from weighted residual scales.

    Same construction as the classical moment estimator, with every sum
    replaced by its weighted version; identical to it when all weights are 1.
    """
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    w_fe, r_fe = wfe.weights, wfe.residuals
    w_be, r_be = wbe.weights, wbe.residuals
    df_fe = max(float(w_fe.sum()) - n - k, 1.0)
    sigma2_eps = float(w_fe @ (r_fe * r_fe)) / df_fe
    df_be = max(float(w_be.sum()) - (k + 1), 1.0)
    between_ms = float(w_be @ (r_be * r_be)) / df_be
    sigma2_alpha = max(0.0, between_ms - sigma2_eps / t)
    return VarianceComponents(
        sigma2_eps=sigma2_eps, sigma2_alpha=sigma2_alpha, n_periods=t
    )


def fit_wre(
    p: PanelDataset,
    cfg: WleConfig,
    *,
    classical_components: bool = False,
) -> RobustFit:
    """Weighted random-effects fit on quasi-demeaned data.

    The quasi-demeaning coefficient comes from robustly weighted variance
    components (from the weighted within and between fits) unless
    ``classical_components`` asks for the unweighted moment estimates.
    """
    if classical_components:
        from .classical import estimate_variance_components

        vc = estimate_variance_components(p)
    else:
        vc = robust_variance_components(fit_wfe(p, cfg), fit_wbe(p, cfg), p)
    tr = quasi_demean(p, vc)
    theta = tr.theta
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    if 1.0 - theta <= 1e-12:
        check_within_variation(tr.x_star, p.x)
        x = tr.x_star
        df_model, intercept = n + k, False
    else:
        x = add_intercept(tr.x_star, scale=1.0 - theta)
        df_model, intercept = k + 1, True
    try:
        sol = solve_wle(tr.y_star, x, cfg)
    except NoConvergedRootError:
        return _fallback_fit(fit_random_effects(p, vc), KIND_WRE, theta_used=theta)
    return _weighted_fit(
        tr.y_star, x, sol, KIND_WRE, df_model, intercept=intercept, theta_used=theta
    )
