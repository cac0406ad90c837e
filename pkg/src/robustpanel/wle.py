"""Weighted-likelihood estimating machinery.

The engine measures the discordance between a kernel density estimate of the
regression residuals and the smoothed normal model density via Pearson
residuals, turns that discordance into per-observation weights in [0, 1]
through a residual adjustment function, and solves the weighted estimating
equations by iterative reweighting. Multiple roots found from bootstrap
subsample starts are ranked by a squared-Hellinger disparity and the
minimum-disparity root is returned.

The kernel bandwidth is tied to the current scale estimate, h = c * sigma,
which makes the whole procedure location and scale equivariant. The constant
c is either given or derived from a downweighting target: the c at which an
isolated point ``ref_distance`` standard deviations from a pure normal model
receives ``target_outlier_weight``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .exceptions import (
    DomainError,
    NoConvergedRootError,
    RankDeficientUnderWeightsError,
)

RAF_HELLINGER = "hellinger"
RAF_IDENTITY = "identity"

# Customary normal-kernel smoothing: kernel variance h^2 = 0.031 sigma^2.
# Wider kernels over-smooth the residual density and mask moderate leverage
# points behind an inflated scale.
DEFAULT_BANDWIDTH_CONSTANT = math.sqrt(0.031)

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_QUARTER = math.log(0.25)
# Scale ratio below which a residual vector counts as an exact fit.
_EXACT_FIT_RTOL = 1e-12


@dataclass
class WleConfig:
    """Tuning knobs for the weighted-likelihood solver.

    ``c`` is the bandwidth constant in h = c * sigma; set it to None to derive
    it instead so that a point ``ref_distance`` sigma out gets weight
    ``target_outlier_weight``. ``subsample_size`` defaults to two more rows
    than the number of design columns, the minimum leaving a residual degree
    of freedom.
    """

    raf: str = RAF_HELLINGER
    c: float | None = DEFAULT_BANDWIDTH_CONSTANT
    target_outlier_weight: float = 0.2
    ref_distance: float = 3.0
    n_bootstrap: int = 30
    subsample_size: int | None = None
    max_iterations: int = 500
    beta_tolerance: float = 1e-8
    root_dedup_tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.raf not in (RAF_HELLINGER, RAF_IDENTITY):
            raise ValueError(f"unknown RAF {self.raf!r}")
        if self.n_bootstrap < 1:
            raise ValueError("n_bootstrap must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.beta_tolerance <= 0 or self.root_dedup_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.c is not None and self.c <= 0:
            raise ValueError("bandwidth constant c must be positive")
        if not 0.0 < self.target_outlier_weight < 1.0:
            raise ValueError("target_outlier_weight must lie in (0, 1)")
        if self.ref_distance <= 0:
            raise ValueError("ref_distance must be positive")

    def resolve_c(self) -> float:
        """The bandwidth constant, deriving it from the weight target if unset."""
        if self.c is not None:
            return self.c
        return derive_bandwidth_constant(self.target_outlier_weight, self.ref_distance)


@dataclass(frozen=True)
class RootCandidate:
    """A converged root of the estimating equations with its disparity."""

    beta: np.ndarray
    sigma_nu: float
    disparity: float


@dataclass(frozen=True)
class WleSolution:
    """Minimum-disparity root of the weighted estimating equations."""

    beta: np.ndarray
    sigma_nu: float
    weights: np.ndarray
    disparity: float
    iterations: int
    converged: bool
    candidate_roots: tuple[RootCandidate, ...]


@dataclass(frozen=True)
class IrlsFit:
    """Fixed point reached by the reweighting iteration from one start."""

    beta: np.ndarray
    sigma_nu: float
    weights: np.ndarray
    converged: bool
    iterations: int


def kernel_density(residuals: np.ndarray, at, h: float):
    """Normal kernel density estimate of ``residuals`` evaluated at ``at``.

    Plain average of N(r_j, h^2) densities; scalar in, scalar out.
    """
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size < 1:
        raise ValueError("need at least one residual")
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    pts = np.atleast_1d(np.asarray(at, dtype=float))
    z = (pts[:, None] - residuals[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (residuals.size * h * _SQRT_2PI)
    return float(dens[0]) if np.isscalar(at) or np.ndim(at) == 0 else dens


def smoothed_model_density(at, sigma_nu: float, h: float):
    """Normal model density convolved with the kernel: N(0, sigma^2 + h^2) at ``at``.

    Closed form of integrating the kernel against the centered normal model.
    """
    if sigma_nu <= 0:
        raise ValueError("sigma_nu must be positive")
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    var = sigma_nu**2 + h**2
    pts = np.asarray(at, dtype=float)
    dens = np.exp(-0.5 * pts * pts / var) / math.sqrt(2.0 * math.pi * var)
    return float(dens) if np.ndim(at) == 0 else dens


def _log_kernel_at_centers(residuals: np.ndarray, h: float) -> np.ndarray:
    """log of the kernel density at the residual points themselves.

    Each point contributes exp(0) = 1 to its own sum, so the inner sum is
    always >= 1 and the log never underflows.
    """
    d = residuals[:, None] - residuals[None, :]
    np.square(d, out=d)
    d *= -0.5 / (h * h)
    np.exp(d, out=d)
    s = d.sum(axis=1)
    return np.log(s) - math.log(residuals.size * h * _SQRT_2PI)


def _log_model_density(pts: np.ndarray, sigma_nu: float, h: float) -> np.ndarray:
    var = sigma_nu**2 + h**2
    return -0.5 * pts * pts / var - 0.5 * math.log(2.0 * math.pi * var)


def _log_density_ratio(residuals: np.ndarray, sigma_nu: float, h: float) -> np.ndarray:
    """log f*(r_i) - log m*(r_i), evaluated in log space so gross outliers
    produce large finite ratios instead of 0/0 underflow."""
    return _log_kernel_at_centers(residuals, h) - _log_model_density(
        residuals, sigma_nu, h
    )


def pearson_residuals(residuals: np.ndarray, sigma_nu: float, h: float) -> np.ndarray:
    """Pearson residuals f*(r_i)/m*(r_i) - 1 for each residual.

    Always greater than -1; may be inf when the model density underflows at a
    gross outlier (the weight function maps that to 0).
    """
    residuals = np.asarray(residuals, dtype=float)
    if sigma_nu <= 0 or h <= 0:
        raise ValueError("sigma_nu and h must be positive")
    with np.errstate(over="ignore"):
        return np.expm1(_log_density_ratio(residuals, sigma_nu, h))


def raf(delta, kind: str = RAF_HELLINGER):
    """Residual adjustment function A(delta).

    Hellinger: 2(sqrt(delta + 1) - 1); identity: delta itself.
    """
    d = np.asarray(delta, dtype=float)
    if np.any(d < -1.0):
        raise DomainError("Pearson residuals are defined on [-1, inf)")
    if kind == RAF_IDENTITY:
        out = d
    elif kind == RAF_HELLINGER:
        out = 2.0 * (np.sqrt(d + 1.0) - 1.0)
    else:
        raise ValueError(f"unknown RAF {kind!r}")
    return float(out) if np.ndim(delta) == 0 else out


def weight(delta, kind: str = RAF_HELLINGER):
    """Downweighting factor omega = min(1, [A(delta) + 1]+ / (delta + 1)).

    The identity RAF gives omega = 1 everywhere (maximum likelihood). Under the
    Hellinger RAF the ratio hits its positive-part clamp for delta + 1 < 1/4,
    where the weight is exactly 0; delta = inf also maps to 0.
    """
    if kind == RAF_IDENTITY:
        out = np.ones_like(np.asarray(delta, dtype=float))
        return float(out) if np.ndim(delta) == 0 else out
    if kind != RAF_HELLINGER:
        raise ValueError(f"unknown RAF {kind!r}")
    rho = np.asarray(delta, dtype=float) + 1.0
    out = np.zeros_like(rho)
    live = rho >= 0.25
    r = rho[live]
    # (2 sqrt(rho) - 1)/rho written as 2/sqrt(rho) - 1/rho: finite at rho = inf.
    out[live] = np.clip(2.0 / np.sqrt(r) - 1.0 / r, 0.0, 1.0)
    return float(out) if np.ndim(delta) == 0 else out


def _weights_from_logratio(logratio: np.ndarray, kind: str) -> np.ndarray:
    """Weights computed directly from log(f*/m*), avoiding overflow at either end."""
    if kind == RAF_IDENTITY:
        return np.ones_like(logratio)
    out = np.zeros_like(logratio)
    live = logratio >= _LOG_QUARTER
    t = np.exp(-0.5 * logratio[live])  # 1/sqrt(rho), in (0, 2]
    out[live] = np.clip(t * (2.0 - t), 0.0, 1.0)
    return out


def disparity(
    residuals: np.ndarray, sigma_nu: float, h: float, n_points: int = 2048
) -> float:
    """Squared-Hellinger disparity between the residual KDE and the model.

    Integrates G(delta(x)) m*(x) with G(d) = 2(sqrt(d + 1) - 1)^2, which
    simplifies to 2(sqrt(f*) - sqrt(m*))^2, over the residual range padded by
    5(h + sigma) on both sides, with a fixed composite Simpson rule.
    """
    residuals = np.asarray(residuals, dtype=float)
    if sigma_nu <= 0 or h <= 0:
        raise ValueError("sigma_nu and h must be positive")
    pad = 5.0 * (h + sigma_nu)
    grid = np.linspace(residuals.min() - pad, residuals.max() + pad, n_points)
    z = (grid[:, None] - residuals[None, :]) / h
    f = np.exp(-0.5 * z * z).sum(axis=1) / (residuals.size * h * _SQRT_2PI)
    m = smoothed_model_density(grid, sigma_nu, h)
    integrand = 2.0 * (np.sqrt(f) - np.sqrt(m)) ** 2
    return float(simpson(integrand, x=grid))


def _weighted_lstsq(y: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    sw = np.sqrt(w)
    xw = x * sw[:, None]
    u, s, vt = np.linalg.svd(xw, full_matrices=False)
    if s[0] == 0.0 or s[-1] < 1e-10 * s[0]:
        raise RankDeficientUnderWeightsError(
            "weighted design is rank deficient; the weights removed too much data"
        )
    return vt.T @ ((u.T @ (y * sw)) / s)


def _scale_fixed_point(
    r: np.ndarray,
    sigma2: float,
    c: float,
    kind: str,
    max_rounds: int = 80,
) -> tuple[float, np.ndarray]:
    """Iterate sigma^2 <- sum(w r^2)/sum(w) with w recomputed at each scale.

    Returns (sigma2, weights) with sigma2 equal to the weighted mean square of
    ``r`` under the returned weights, so the scale estimating equation
    sum(w_i (r_i^2/sigma^2 - 1)) = 0 holds to machine precision.
    """
    floor = (_EXACT_FIT_RTOL * max(1.0, float(np.abs(r).max()))) ** 2
    w = np.ones_like(r)
    for _ in range(max_rounds):
        sigma = math.sqrt(sigma2)
        w = _weights_from_logratio(_log_density_ratio(r, sigma, c * sigma), kind)
        total = w.sum()
        if total <= 0:
            raise RankDeficientUnderWeightsError("all observations received zero weight")
        new_sigma2 = max(float(w @ (r * r) / total), floor)
        done = abs(new_sigma2 - sigma2) <= 1e-13 * sigma2
        sigma2 = new_sigma2
        if done:
            break
    return sigma2, w


def _mad_scale(r: np.ndarray) -> float:
    """Normalized median absolute deviation; robust residual-scale start."""
    med = float(np.median(r))
    mad = 1.4826 * float(np.median(np.abs(r - med)))
    if mad > 0:
        return mad
    return float(np.sqrt(np.mean(r * r)))


def irls_solve(
    y: np.ndarray,
    x: np.ndarray,
    init_beta: np.ndarray,
    cfg: WleConfig,
    *,
    init_sigma: float | None = None,
    polish: bool = True,
    known_roots: list[np.ndarray] | None = None,
) -> IrlsFit:
    """Iteratively reweighted solve of the weighted estimating equations.

    Alternates residuals -> weighted scale -> bandwidth -> weights -> weighted
    least squares until the coefficient step is below ``beta_tolerance``
    relative to the coefficient size. The first pass evaluates weights at
    ``init_sigma`` (a robust residual scale at ``init_beta`` when omitted);
    starting from the unit-weight scale would fold gross outliers into sigma
    and mask them before any weight is computed. When ``known_roots`` is
    given, an iterate landing within the dedup tolerance of a previously found
    root stops early and snaps to it. With ``polish`` the returned scale and
    weights are driven to their mutual fixed point at the final coefficients.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    c = cfg.resolve_c()
    beta = np.asarray(init_beta, dtype=float).copy()
    n = len(y)
    w = np.ones(n)
    y_scale = max(1.0, float(np.abs(y).max()))
    converged = False
    iterations = 0
    sigma2 = 0.0

    for iterations in range(1, cfg.max_iterations + 1):
        r = y - x @ beta
        r_scale = float(np.abs(r).max())
        if r_scale <= _EXACT_FIT_RTOL * y_scale:
            # Exact fit: densities degenerate, every observation conforms.
            return IrlsFit(
                beta=beta,
                sigma_nu=float(np.sqrt(np.mean(r * r))),
                weights=np.ones(n),
                converged=True,
                iterations=iterations,
            )
        floor = (_EXACT_FIT_RTOL * r_scale) ** 2
        if iterations == 1:
            if init_sigma is None or init_sigma <= 0:
                sigma2 = max(_mad_scale(r) ** 2, floor)
            else:
                sigma2 = max(float(init_sigma) ** 2, floor)
        else:
            total = w.sum()
            if total <= 0:
                raise RankDeficientUnderWeightsError(
                    "all observations received zero weight"
                )
            sigma2 = max(float(w @ (r * r) / total), floor)
        sigma = math.sqrt(sigma2)
        if cfg.raf == RAF_IDENTITY:
            w = np.ones(n)
        else:
            w = _weights_from_logratio(_log_density_ratio(r, sigma, c * sigma), cfg.raf)
            if w.sum() < x.shape[1] + 1:
                # scale implosion: the weights keep less mass than parameters
                raise RankDeficientUnderWeightsError(
                    "weights retain less effective mass than the parameter count"
                )
        new_beta = _weighted_lstsq(y, x, w)
        step = float(np.abs(new_beta - beta).max())
        beta = new_beta
        if step <= cfg.beta_tolerance * (1.0 + float(np.abs(beta).max())):
            converged = True
            break
        if known_roots is not None:
            for root in known_roots:
                if float(np.abs(beta - root).max()) <= cfg.root_dedup_tolerance:
                    beta = root.copy()
                    converged = True
                    break
            if converged:
                break

    r = y - x @ beta
    if polish and converged:
        sigma2, w = _scale_fixed_point(r, sigma2, c, cfg.raf)
    return IrlsFit(
        beta=beta,
        sigma_nu=math.sqrt(sigma2),
        weights=w,
        converged=converged,
        iterations=iterations,
    )


def _draw_subsample_start(
    y: np.ndarray,
    x: np.ndarray,
    size: int,
    rng: np.random.Generator,
    max_tries: int = 20,
) -> tuple[np.ndarray, float] | None:
    """Coefficients and residual scale fit on a random subsample.

    This is why a subsample carries at least one residual degree of freedom:
    it must seed the scale as well as the coefficients. Singular draws are
    retried from the same stream.
    """
    n, p = x.shape
    for _ in range(max_tries):
        idx = rng.choice(n, size=size, replace=False)
        xs = x[idx]
        s = np.linalg.svd(xs, compute_uv=False)
        if s[0] > 0.0 and s[-1] >= 1e-10 * s[0]:
            beta, *_ = np.linalg.lstsq(xs, y[idx], rcond=None)
            rs = y[idx] - xs @ beta
            dof = max(size - p, 1)
            sigma = math.sqrt(float(rs @ rs) / dof)
            return beta, sigma
    return None


def solve_wle(y: np.ndarray, x: np.ndarray, cfg: WleConfig) -> WleSolution:
    """Bootstrap-root search over the weighted estimating equations.

    Runs the reweighting iteration from OLS fits on ``n_bootstrap`` subsamples
    drawn without replacement, deduplicates the converged roots, scores each by
    the squared-Hellinger disparity, and returns the minimum-disparity root
    (first index wins ties). Raises ``NoConvergedRootError`` when every start
    fails.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    size = cfg.subsample_size if cfg.subsample_size is not None else p + 2
    if size < p:
        raise ValueError(f"subsample_size={size} cannot identify {p} parameters")
    if n < size:
        raise ValueError(f"need at least {size} rows, got {n}")
    c = cfg.resolve_c()
    y_scale = max(1.0, float(np.abs(y).max()))

    roots: list[IrlsFit] = []
    root_iters: list[int] = []
    for b in range(cfg.n_bootstrap):
        rng = np.random.default_rng([cfg.seed, b])
        start = _draw_subsample_start(y, x, size, rng)
        if start is None:
            continue
        init_beta, init_sigma = start
        try:
            fit = irls_solve(
                y,
                x,
                init_beta,
                cfg,
                init_sigma=init_sigma,
                polish=False,
                known_roots=[f.beta for f in roots],
            )
        except RankDeficientUnderWeightsError:
            continue
        if not fit.converged:
            continue
        dup = any(
            float(np.abs(fit.beta - f.beta).max()) <= cfg.root_dedup_tolerance
            for f in roots
        )
        if not dup:
            roots.append(fit)
            root_iters.append(fit.iterations)

    candidates: list[RootCandidate] = []
    finals: list[tuple[float, np.ndarray]] = []
    kept_iters: list[int] = []
    for fit, iters in zip(roots, root_iters):
        r = y - x @ fit.beta
        if float(np.abs(r).max()) <= _EXACT_FIT_RTOL * y_scale:
            # Exact fit on every row: the model reproduces the data.
            sigma2, w = fit.sigma_nu**2, np.ones(n)
            rho = 0.0
        else:
            try:
                sigma2, w = _scale_fixed_point(r, fit.sigma_nu**2, c, cfg.raf)
            except RankDeficientUnderWeightsError:
                continue
            if w.sum() < p + 1:
                # imploded root: interpolates a handful of points exactly and
                # zeroes out everything else
                continue
            sigma = math.sqrt(sigma2)
            rho = disparity(r, sigma, c * sigma)
        candidates.append(
            RootCandidate(beta=fit.beta.copy(), sigma_nu=math.sqrt(sigma2), disparity=rho)
        )
        finals.append((sigma2, w))
        kept_iters.append(iters)

    if not candidates:
        raise NoConvergedRootError(
            f"none of the {cfg.n_bootstrap} bootstrap starts converged to a "
            "usable root"
        )

    best = 0
    for j in range(1, len(candidates)):
        if candidates[j].disparity < candidates[best].disparity - 1e-12:
            best = j
    sigma2, w = finals[best]
    return WleSolution(
        beta=candidates[best].beta.copy(),
        sigma_nu=math.sqrt(sigma2),
        weights=w,
        disparity=candidates[best].disparity,
        iterations=kept_iters[best],
        converged=True,
        candidate_roots=tuple(candidates),
    )


def single_outlier_weight(c: float, distance: float, sigma: float = 1.0) -> float:
    """Weight an isolated point ``distance * sigma`` from a pure N(0, sigma^2)
    model would receive, computed through the engine's own density machinery."""
    d = distance * sigma
    h = c * sigma
    f = kernel_density(np.array([d]), d, h)
    m = smoothed_model_density(d, sigma, h)
    return weight(f / m - 1.0, RAF_HELLINGER)


@lru_cache(maxsize=32)
def derive_bandwidth_constant(
    target_weight: float = 0.2, ref_distance: float = 3.0
) -> float:
    """Bandwidth constant c at which a single point ``ref_distance`` sigma out
    receives ``target_weight`` under the Hellinger RAF.

    The single-outlier weight is monotone increasing in c (a wider kernel sees
    the point as less discordant), so a bisection pins c uniquely.
    """
    if not 0.0 < target_weight < 1.0:
        raise DomainError("target weight must lie strictly between 0 and 1")
    if ref_distance <= 0:
        raise DomainError("reference distance must be positive")
    lo, hi = 1e-6, 1e6
    if single_outlier_weight(hi, ref_distance) < target_weight:
        raise DomainError(
            f"target weight {target_weight} unreachable at distance {ref_distance}"
        )
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if single_outlier_weight(mid, ref_distance) < target_weight:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return math.sqrt(lo * hi)
