"""Monte Carlo harness: data generation, contamination, replication loop, tables.

Panels are generated from two designs sharing the model
``y = x'beta + effect + noise``: under the random-effects design (``re``) the
regressors are independent standard normals, while under the fixed-effects
design (``fe``) the effect disturbance is added to every regressor column,
which makes all four least-squares estimators inconsistent with an identical
asymptotic bias. The effect disturbance is drawn independently for every
(i, t) cell; this per-cell scheme is what the benchmark tables the harness
reproduces are calibrated to.

Every replication draws from a stream keyed (seed, replication), so results
are identical under any worker count.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .classical import (
    fit_between,
    fit_fixed_effects,
    fit_pooled_ols,
    fit_random_effects,
)
from .exceptions import InfeasibleContaminationError, RobustPanelError
from .panel import PanelDataset
from .robust import fit_wbe, fit_wfe, fit_wpols, fit_wre
from .wle import WleConfig

DGP_RANDOM_EFFECTS = "re"
DGP_FIXED_EFFECTS = "fe"

SCHEME_RANDOM_VERTICAL = "random_vertical"
SCHEME_RANDOM_LEVERAGE = "random_leverage"
SCHEME_CONCENTRATED_VERTICAL = "concentrated_vertical"
SCHEME_CONCENTRATED_LEVERAGE = "concentrated_leverage"
SCHEMES = (
    SCHEME_RANDOM_VERTICAL,
    SCHEME_RANDOM_LEVERAGE,
    SCHEME_CONCENTRATED_VERTICAL,
    SCHEME_CONCENTRATED_LEVERAGE,
)

ESTIMATORS = ("pols", "wpols", "be", "wbe", "fe", "wfe", "re", "wre")

_ERROR_LAWS: dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "normal": lambda rng, size: rng.standard_normal(size),
    "t5": lambda rng, size: rng.standard_t(5, size),
    "laplace": lambda rng, size: rng.laplace(0.0, 1.0, size),
}


@dataclass(frozen=True)
class Contamination:
    """Outlier insertion request: which scheme and how many cells."""

    scheme: str
    m: int

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown contamination scheme {self.scheme!r}")
        if self.m < 0:
            raise ValueError("outlier count must be non-negative")


@dataclass
class SimSpec:
    """One Monte Carlo scenario."""

    dgp: str = DGP_RANDOM_EFFECTS
    n_individuals: int = 100
    n_periods: int = 4
    beta_true: tuple[float, ...] = (2.4, -1.2)
    error_law: str = "normal"
    contamination: Contamination | None = None
    n_replications: int = 100
    significance: float = 0.05
    seed: int = 0
    wle: WleConfig = field(default_factory=WleConfig)

    def __post_init__(self) -> None:
        if self.dgp not in (DGP_RANDOM_EFFECTS, DGP_FIXED_EFFECTS):
            raise ValueError(f"unknown dgp {self.dgp!r}")
        if self.error_law not in _ERROR_LAWS:
            raise ValueError(f"unknown error law {self.error_law!r}")
        if self.n_replications < 1:
            raise ValueError("need at least one replication")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must lie in (0, 1)")
        if self.contamination is not None:
            if self.contamination.m > self.n_individuals * self.n_periods:
                raise ValueError("more outliers than cells")


@dataclass(frozen=True)
class EstimatorSummary:
    """Aggregates for one estimator over all replications."""

    estimator: str
    mse: float
    power: np.ndarray
    mean_beta: np.ndarray
    n_fallbacks: int
    runtime: float
    n_used: int


@dataclass(frozen=True)
class SimResult:
    spec: SimSpec
    summaries: dict[str, EstimatorSummary]


def generate_panel(spec: SimSpec, replication_index: int) -> PanelDataset:
    """Draw one synthetic panel, deterministic in (spec.seed, replication_index).

    The effect disturbance and the idiosyncratic error are both drawn per
    (i, t) cell; the fixed-effects design adds the effect draw to every
    regressor column, inducing correlation near 1/sqrt(2) between regressors
    and the compound error.
    """
    rng = np.random.default_rng([spec.seed, replication_index])
    n, t = spec.n_individuals, spec.n_periods
    beta = np.asarray(spec.beta_true, dtype=float)
    k = len(beta)
    rows = n * t
    effect = rng.standard_normal(rows)
    z = rng.standard_normal((rows, k))
    eps = _ERROR_LAWS[spec.error_law](rng, rows)
    x = z + effect[:, None] if spec.dgp == DGP_FIXED_EFFECTS else z
    y = x @ beta + effect + eps
    return PanelDataset(y=y, x=x, ids=np.arange(n), times=np.arange(t))


def contamination_block_size(n_periods: int) -> int:
    """Periods corrupted per individual under concentrated schemes.

    Concentrated outliers fill whole individuals: every period of a chosen
    unit is corrupted, so the block is T cells. (Anything less leaves a
    within-individual trace that the fixed-effects transform cannot cancel,
    which contradicts the benchmark tables this harness reproduces.)
    """
    return n_periods


def contaminate(
    p: PanelDataset,
    scheme: str,
    m: int,
    rng: np.random.Generator,
    beta_true: Sequence[float] | None = None,
) -> tuple[PanelDataset, np.ndarray]:
    """Insert ``m`` outlying cells; returns the new panel and a row mask.

    Random schemes pick cells uniformly; concentrated schemes corrupt whole
    individuals chosen without replacement (blocks of T cells), so ``m`` must
    be a whole number of such blocks.

    Vertical outliers perturb only the response: y <- -3y for the random
    scheme, y <- -3y + N(50, 1) for the concentrated one. Leverage points
    redraw every regressor from N(5, 4) and rebuild the response through the
    new regressors before perturbing it: y <- -3(x_new'beta + nu) + N(20, 4),
    where nu is the cell's original compound error. That rebuild is what makes
    the corrupted cells genuine leverage points rather than an independent
    cloud, and it requires ``beta_true``.
    """
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    rows = p.n_rows
    mask = np.zeros(rows, dtype=bool)
    if m == 0:
        return p, mask
    if m > rows:
        raise InfeasibleContaminationError(f"{m} outliers exceed {rows} cells")
    y = p.y.copy()
    x = p.x.copy()

    if scheme in (SCHEME_RANDOM_VERTICAL, SCHEME_RANDOM_LEVERAGE):
        cells = np.sort(rng.choice(rows, size=m, replace=False))
    elif scheme in (SCHEME_CONCENTRATED_VERTICAL, SCHEME_CONCENTRATED_LEVERAGE):
        block = contamination_block_size(t)
        if m % block != 0:
            raise InfeasibleContaminationError(
                f"{m} outliers are not whole blocks of {block} cells (T={t})"
            )
        n_blocks = m // block
        if n_blocks > n:
            raise InfeasibleContaminationError(
                f"{n_blocks} contaminated individuals exceed N={n}"
            )
        individuals = np.sort(rng.choice(n, size=n_blocks, replace=False))
        offsets = rng.integers(0, t - block + 1, size=n_blocks)
        cells = np.concatenate(
            [i * t + off + np.arange(block) for i, off in zip(individuals, offsets)]
        )
    else:
        raise ValueError(f"unknown contamination scheme {scheme!r}")

    if scheme == SCHEME_RANDOM_VERTICAL:
        y[cells] = -3.0 * y[cells]
    elif scheme == SCHEME_CONCENTRATED_VERTICAL:
        y[cells] = -3.0 * y[cells] + rng.normal(50.0, 1.0, size=m)
    else:  # leverage, random or concentrated
        if beta_true is None:
            raise ValueError(
                "leverage contamination rebuilds the response through the new "
                "regressors; supply beta_true"
            )
        beta = np.asarray(beta_true, dtype=float)
        nu = y[cells] - x[cells] @ beta
        x[cells] = rng.normal(5.0, 2.0, size=(m, k))
        y[cells] = -3.0 * (x[cells] @ beta + nu) + rng.normal(20.0, 2.0, size=m)

    mask[cells] = True
    return p.replace(y=y, x=x), mask


def fit_estimator(name: str, p: PanelDataset, cfg: WleConfig):
    """Dispatch one estimator by its short name."""
    if name == "pols":
        return fit_pooled_ols(p)
    if name == "be":
        return fit_between(p)
    if name == "fe":
        return fit_fixed_effects(p)
    if name == "re":
        return fit_random_effects(p)
    if name == "wpols":
        return fit_wpols(p, cfg)
    if name == "wbe":
        return fit_wbe(p, cfg)
    if name == "wfe":
        return fit_wfe(p, cfg)
    if name == "wre":
        return fit_wre(p, cfg)
    raise ValueError(f"unknown estimator {name!r}")


def _replication_config(spec: SimSpec, rep: int) -> WleConfig:
    sub_seed = int(np.random.SeedSequence([spec.seed, rep, 2]).generate_state(1)[0])
    return replace(spec.wle, seed=sub_seed)


def _run_replication(args: tuple[SimSpec, tuple[str, ...], int]) -> dict:
    """Worker: generate, contaminate, fit every requested estimator."""
    spec, estimators, rep = args
    panel = generate_panel(spec, rep)
    if spec.contamination is not None and spec.contamination.m > 0:
        rng = np.random.default_rng([spec.seed, rep, 1])
        panel, _ = contaminate(
            panel,
            spec.contamination.scheme,
            spec.contamination.m,
            rng,
            beta_true=spec.beta_true,
        )
    cfg = _replication_config(spec, rep)
    out: dict = {}
    for name in estimators:
        start = time.perf_counter()
        try:
            fit = fit_estimator(name, panel, cfg)
        except RobustPanelError:
            out[name] = None
            continue
        elapsed = time.perf_counter() - start
        tratio = fit.slopes / fit.slope_std_errors
        fallback = bool(getattr(fit, "fallback", False))
        out[name] = (fit.slopes, tratio, fallback, elapsed)
    return out


def run_simulation(
    spec: SimSpec,
    estimators: Sequence[str] = ESTIMATORS,
    jobs: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> SimResult:
    """Replicate the scenario and aggregate squared error and test power.

    MSE averages the squared coefficient-vector error over replications,
    slopes only. Power is the rejection frequency of the zero null per slope:
    the share of replications with |beta_k / se_k| above the standard normal
    1 - gamma/2 quantile. Replications are independent tasks; with ``jobs`` > 1
    they run in worker processes with identical output.
    """
    names = tuple(estimators)
    for name in names:
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}")
    reps = spec.n_replications
    tasks = [(spec, names, rep) for rep in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, reps // (jobs * 8))
            results = []
            for i, res in enumerate(pool.map(_run_replication, tasks, chunksize=chunk)):
                results.append(res)
                if progress is not None:
                    progress(i + 1, reps)
    else:
        results = []
        for i, task in enumerate(tasks):
            results.append(_run_replication(task))
            if progress is not None:
                progress(i + 1, reps)

    beta = np.asarray(spec.beta_true, dtype=float)
    crit = norm.ppf(1.0 - spec.significance / 2.0)
    summaries: dict[str, EstimatorSummary] = {}
    for name in names:
        slopes, tratios, fallbacks, elapsed = [], [], 0, 0.0
        for res in results:
            rec = res[name]
            if rec is None:
                fallbacks += 1
                continue
            s, t, fb, dt = rec
            slopes.append(s)
            tratios.append(t)
            fallbacks += int(fb)
            elapsed += dt
        if not slopes:
            raise RobustPanelError(f"estimator {name!r} failed in every replication")
        slopes_arr = np.vstack(slopes)
        t_arr = np.vstack(tratios)
        err = slopes_arr - beta
        summaries[name] = EstimatorSummary(
            estimator=name,
            mse=float(np.mean(np.sum(err * err, axis=1))),
            power=(np.abs(t_arr) > crit).mean(axis=0),
            mean_beta=slopes_arr.mean(axis=0),
            n_fallbacks=fallbacks,
            runtime=elapsed,
            n_used=len(slopes),
        )
    return SimResult(spec=spec, summaries=summaries)


# --- grid config files -------------------------------------------------------

_GRID_KEYS = {
    "dgp",
    "n",
    "t",
    "error",
    "scheme",
    "outliers",
    "replications",
    "gamma",
    "seed",
    "beta",
    "estimators",
    "raf",
    "c",
    "bootstrap",
    "subsample",
}


@dataclass(frozen=True)
class GridCell:
    name: str
    spec: SimSpec
    estimators: tuple[str, ...]


def parse_grid_config(path: str | Path, seed_override: int | None = None) -> list[GridCell]:
    """Parse an INI grid file into one scenario per section.

    Keys (any may sit in ``[DEFAULT]`` to apply everywhere): ``dgp`` (fe|re),
    ``n``, ``t``, ``error`` (normal|t5|laplace), ``scheme`` (none or a
    contamination scheme), ``outliers``, ``replications``, ``gamma``, ``seed``,
    ``beta`` (comma-separated), ``estimators`` (comma-separated), ``raf``,
    ``c``, ``bootstrap``, ``subsample``. Unknown keys raise ValueError naming
    the key.
    """
    import configparser

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path}")
    cells: list[GridCell] = []
    for section in parser.sections():
        raw = dict(parser[section])
        for key in raw:
            if key not in _GRID_KEYS:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
        try:
            beta = tuple(
                float(v) for v in raw.get("beta", "2.4,-1.2").split(",") if v.strip()
            )
            scheme = raw.get("scheme", "none").strip()
            outliers = int(raw.get("outliers", "0"))
            contamination = (
                None
                if scheme == "none" or outliers == 0
                else Contamination(scheme=scheme, m=outliers)
            )
            seed = seed_override if seed_override is not None else int(raw.get("seed", "0"))
            wle_kwargs: dict = {"seed": seed}
            if "raf" in raw:
                wle_kwargs["raf"] = raw["raf"].strip()
            if "c" in raw:
                wle_kwargs["c"] = float(raw["c"])
            if "bootstrap" in raw:
                wle_kwargs["n_bootstrap"] = int(raw["bootstrap"])
            if "subsample" in raw:
                wle_kwargs["subsample_size"] = int(raw["subsample"])
            spec = SimSpec(
                dgp=raw.get("dgp", DGP_RANDOM_EFFECTS).strip(),
                n_individuals=int(raw["n"]),
                n_periods=int(raw["t"]),
                beta_true=beta,
                error_law=raw.get("error", "normal").strip(),
                contamination=contamination,
                n_replications=int(raw.get("replications", "100")),
                significance=float(raw.get("gamma", "0.05")),
                seed=seed,
                wle=WleConfig(**wle_kwargs),
            )
            estimators = tuple(
                name.strip()
                for name in raw.get("estimators", ",".join(ESTIMATORS)).split(",")
                if name.strip()
            )
            for name in estimators:
                if name not in ESTIMATORS:
                    raise ValueError(f"unknown estimator {name!r}")
        except KeyError as exc:
            raise ValueError(f"section [{section}] is missing key {exc.args[0]!r}") from exc
        cells.append(GridCell(name=section, spec=spec, estimators=estimators))
    if not cells:
        raise ValueError(f"config file {path} defines no scenario sections")
    return cells


# --- result tables -----------------------------------------------------------

def _result_rows(results: Iterable[SimResult]) -> tuple[list[str], list[list[str]]]:
    results = list(results)
    max_k = max((len(r.spec.beta_true) for r in results), default=2)
    header = ["estimator", "dgp", "N", "T", "error", "scheme", "level", "mse"]
    header += [f"power_b{j + 1}" for j in range(max_k)]
    header += ["fallbacks"]
    rows = []
    for res in results:
        spec = res.spec
        cells = spec.n_individuals * spec.n_periods
        if spec.contamination is None or spec.contamination.m == 0:
            scheme, level = "none", 0.0
        else:
            scheme = spec.contamination.scheme
            level = 100.0 * spec.contamination.m / cells
        for name, s in res.summaries.items():
            row = [
                name,
                spec.dgp,
                str(spec.n_individuals),
                str(spec.n_periods),
                spec.error_law,
                scheme,
                f"{level:g}",
                f"{s.mse:.4g}",
            ]
            power = list(s.power) + [float("nan")] * (max_k - len(s.power))
            row += [f"{v:.4g}" for v in power]
            row.append(str(s.n_fallbacks))
            rows.append(row)
    return header, rows


def write_results_csv(results: Iterable[SimResult], path: str | Path) -> None:
    """Results table keyed (estimator x scenario), 4 significant digits."""
    header, rows = _result_rows(results)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def format_results_text(results: Iterable[SimResult]) -> str:
    """Aligned text rendering of the same rows the CSV carries."""
    header, rows = _result_rows(results)
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(v)) for w, v in zip(widths, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)
