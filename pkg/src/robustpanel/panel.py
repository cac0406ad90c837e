"""Balanced panel container and the data transformations used by all estimators.

A panel holds N individuals observed over T common periods with K regressors.
Rows are stored in long format sorted by (id, time), so row ``r`` maps to
individual ``r // T`` and period ``r % T``. All derived transforms keep that
deterministic row order, which is what lets per-row weights be traced back to
specific observations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DuplicateCellError,
    NonFiniteValueError,
    UnbalancedPanelError,
)

TRANSFORM_POOLED = "pooled"
TRANSFORM_WITHIN = "within"
TRANSFORM_BETWEEN = "between"
TRANSFORM_QUASI = "quasi"


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PanelDataset:
    """Balanced long-format panel sorted by (id, time).

    Attributes
    ----------
    y : np.ndarray of shape (N*T,)
        Response values.
    x : np.ndarray of shape (N*T, K)
        Regressor values.
    ids : np.ndarray of shape (N,)
        Individual labels, in row-block order.
    times : np.ndarray of shape (T,)
        Period labels, in within-block order.
    """

    y: np.ndarray
    x: np.ndarray
    ids: np.ndarray
    times: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array of shape (N*T, K)")
        n, t = len(self.ids), len(self.times)
        k = x.shape[1]
        if n < 2 or t < 2:
            raise UnbalancedPanelError(
                f"panel needs N >= 2 individuals and T >= 2 periods, got N={n}, T={t}"
            )
        if k < 1:
            raise ValueError("panel needs at least one regressor")
        if y.shape != (n * t,) or x.shape[0] != n * t:
            raise UnbalancedPanelError(
                f"expected {n * t} rows for N={n}, T={t}, got y:{y.shape[0]}, x:{x.shape[0]}"
            )
        if n * t <= k:
            raise ValueError(f"N*T={n * t} rows cannot identify K={k} regressors")
        if not np.isfinite(y).all():
            row = int(np.flatnonzero(~np.isfinite(y))[0])
            raise NonFiniteValueError(f"non-finite response at row {row}")
        if not np.isfinite(x).all():
            row = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0])
            raise NonFiniteValueError(f"non-finite regressor at row {row}")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "ids", _readonly(np.asarray(self.ids)))
        object.__setattr__(self, "times", _readonly(np.asarray(self.times)))

    @property
    def n_individuals(self) -> int:
        return len(self.ids)

    @property
    def n_periods(self) -> int:
        return len(self.times)

    @property
    def n_regressors(self) -> int:
        return self.x.shape[1]

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    def individual_index(self) -> np.ndarray:
        """Index of the individual that owns each row."""
        return np.repeat(np.arange(self.n_individuals), self.n_periods)

    def individual_means(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-individual time averages (ybar of shape (N,), xbar of shape (N, K))."""
        n, t, k = self.n_individuals, self.n_periods, self.n_regressors
        ybar = self.y.reshape(n, t).mean(axis=1)
        xbar = self.x.reshape(n, t, k).mean(axis=1)
        return ybar, xbar

    def replace(self, y: np.ndarray | None = None, x: np.ndarray | None = None) -> "PanelDataset":
        """Copy of the panel with the response and/or regressors replaced."""
        return PanelDataset(
            y=self.y if y is None else y,
            x=self.x if x is None else x,
            ids=self.ids,
            times=self.times,
        )


@dataclass(frozen=True)
class TransformedData:
    """Output of a panel transformation.

    ``row_index`` maps output rows back to the source: original row positions
    for the NT-row transforms (pooled/within/quasi) and individual positions
    for the between transform. ``theta`` is only meaningful for ``quasi``.
    """

    y_star: np.ndarray
    x_star: np.ndarray
    row_index: np.ndarray
    kind: str
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "y_star", _readonly(np.asarray(self.y_star, dtype=float)))
        object.__setattr__(self, "x_star", _readonly(np.asarray(self.x_star, dtype=float)))
        object.__setattr__(self, "row_index", _readonly(np.asarray(self.row_index)))


@dataclass(frozen=True)
class VarianceComponents:
    """Idiosyncratic and effect variances of the compound panel error.

    The quasi-demeaning coefficient and the T x T within-block covariance are
    derived lazily so that a components object can never hold an inconsistent
    (sigma, theta) pair.
    """

    sigma2_eps: float
    sigma2_alpha: float
    n_periods: int

    def __post_init__(self) -> None:
        if self.sigma2_eps < 0 or self.sigma2_alpha < 0:
            raise ValueError("variance components must be non-negative")
        if self.n_periods < 2:
            raise ValueError("n_periods must be at least 2")

    @property
    def sigma2_nu(self) -> float:
        """Compound error variance: effect variance plus idiosyncratic variance."""
        return self.sigma2_alpha + self.sigma2_eps

    @property
    def theta(self) -> float:
        """Quasi-demeaning coefficient in [0, 1].

        0 when the effect variance is zero (pooled data); 1 in the degenerate
        all-effect case (pure within transform).
        """
        denom = self.sigma2_eps + self.n_periods * self.sigma2_alpha
        if denom == 0.0:
            return 0.0
        return 1.0 - np.sqrt(self.sigma2_eps / denom)

    def omega(self) -> np.ndarray:
        """Within-individual covariance matrix of the compound error."""
        t = self.n_periods
        return self.sigma2_eps * np.eye(t) + self.sigma2_alpha * np.ones((t, t))


def _label_order(labels) -> list:
    """Sort labels numerically when they all parse as numbers (so CSV string
    ids keep their original order), lexicographically otherwise."""
    labels = list(labels)
    try:
        return sorted(labels, key=float)
    except (TypeError, ValueError):
        return sorted(labels, key=str)


def validate_panel(rows: Iterable[Sequence]) -> PanelDataset:
    """Pack raw long-format rows ``(id, time, y, x_1, ..., x_K)`` into a panel.

    Rows may arrive in any order; the result is sorted by (id, time), with
    numeric label order whenever labels parse as numbers. Raises
    ``DuplicateCellError``, ``UnbalancedPanelError`` or ``NonFiniteValueError``
    on malformed input.
    """
    rows = list(rows)
    if not rows:
        raise UnbalancedPanelError("no rows supplied")
    width = len(rows[0])
    if width < 4:
        raise ValueError("rows need at least (id, time, y, x1)")
    k = width - 3

    cells: dict[tuple, Sequence] = {}
    for row in rows:
        if len(row) != width:
            raise ValueError(f"row {row!r} has {len(row)} fields, expected {width}")
        key = (row[0], row[1])
        if key in cells:
            raise DuplicateCellError(f"duplicate cell (id={row[0]!r}, time={row[1]!r})")
        cells[key] = row

    ids = _label_order({key[0] for key in cells})
    times = _label_order({key[1] for key in cells})
    n, t = len(ids), len(times)
    for i in ids:
        for s in times:
            if (i, s) not in cells:
                raise UnbalancedPanelError(f"individual {i!r} is missing period {s!r}")
    if len(cells) != n * t:
        raise UnbalancedPanelError(
            f"{len(cells)} cells cannot form a balanced {n} x {t} panel"
        )

    y = np.empty(n * t)
    x = np.empty((n * t, k))
    for a, i in enumerate(ids):
        for b, s in enumerate(times):
            row = cells[(i, s)]
            r = a * t + b
            try:
                y[r] = float(row[2])
                x[r] = [float(v) for v in row[3:]]
            except (TypeError, ValueError) as exc:
                raise NonFiniteValueError(
                    f"non-numeric value in cell (id={i!r}, time={s!r}): {exc}"
                ) from exc
            if not np.isfinite(y[r]) or not np.isfinite(x[r]).all():
                raise NonFiniteValueError(f"non-finite value in cell (id={i!r}, time={s!r})")

    return PanelDataset(y=y, x=x, ids=np.asarray(ids), times=np.asarray(times))


def pooled_data(p: PanelDataset) -> TransformedData:
    """Identity transform: the stacked NT rows unchanged."""
    return TransformedData(
        y_star=p.y, x_star=p.x, row_index=np.arange(p.n_rows), kind=TRANSFORM_POOLED
    )


def within_transform(p: PanelDataset) -> TransformedData:
    """Subtract per-individual time means from every column.

    Eliminates anything constant over time within an individual; the output has
    zero per-individual mean in every column.
    """
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    ybar, xbar = p.individual_means()
    y_star = (p.y.reshape(n, t) - ybar[:, None]).reshape(n * t)
    x_star = (p.x.reshape(n, t, k) - xbar[:, None, :]).reshape(n * t, k)
    return TransformedData(
        y_star=y_star, x_star=x_star, row_index=np.arange(p.n_rows), kind=TRANSFORM_WITHIN
    )


def between_transform(p: PanelDataset) -> TransformedData:
    """Collapse the panel to the N rows of per-individual time averages."""
    ybar, xbar = p.individual_means()
    return TransformedData(
        y_star=ybar,
        x_star=xbar,
        row_index=np.arange(p.n_individuals),
        kind=TRANSFORM_BETWEEN,
    )


def quasi_demean(p: PanelDataset, vc: VarianceComponents) -> TransformedData:
    """Subtract theta times the per-individual mean from every column.

    theta comes from the variance components: 0 reproduces the pooled data
    exactly and 1 reproduces the within transform.
    """
    theta = vc.theta
    n, t, k = p.n_individuals, p.n_periods, p.n_regressors
    ybar, xbar = p.individual_means()
    y_star = (p.y.reshape(n, t) - theta * ybar[:, None]).reshape(n * t)
    x_star = (p.x.reshape(n, t, k) - theta * xbar[:, None, :]).reshape(n * t, k)
    return TransformedData(
        y_star=y_star,
        x_star=x_star,
        row_index=np.arange(p.n_rows),
        kind=TRANSFORM_QUASI,
        theta=float(theta),
    )


def read_panel_csv(
    path: str | Path,
    id_col: str = "id",
    time_col: str = "time",
    y_col: str = "y",
    x_cols: Sequence[str] | None = None,
) -> PanelDataset:
    """Load a long-format CSV with header ``id,time,y,x1,...,xK`` into a panel.

    Column names may be remapped; when ``x_cols`` is omitted every column other
    than id/time/y is treated as a regressor, in header order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise UnbalancedPanelError(f"{path}: empty file")
        header = list(reader.fieldnames)
        for col in (id_col, time_col, y_col):
            if col not in header:
                raise ValueError(f"{path}: missing column {col!r}")
        if x_cols is None:
            x_cols = [c for c in header if c not in (id_col, time_col, y_col)]
        else:
            for col in x_cols:
                if col not in header:
                    raise ValueError(f"{path}: missing column {col!r}")
        if not x_cols:
            raise ValueError(f"{path}: no regressor columns")
        rows = []
        for rec in reader:
            if None in rec.values() or None in rec:
                raise ValueError(f"{path}: ragged row near id={rec.get(id_col)!r}")
            rows.append(
                (rec[id_col], rec[time_col], rec[y_col], *(rec[c] for c in x_cols))
            )
    return validate_panel(rows)


def write_panel_csv(p: PanelDataset, path: str | Path) -> None:
    """Write the panel in the long-format CSV schema ``id,time,y,x1,...,xK``.

    Floats are written with ``repr`` so a read-back reproduces values exactly.
    """
    path = Path(path)
    t = p.n_periods
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "time", "y"] + [f"x{j + 1}" for j in range(p.n_regressors)])
        for r in range(p.n_rows):
            writer.writerow(
                [p.ids[r // t], p.times[r % t], repr(float(p.y[r]))]
                + [repr(float(v)) for v in p.x[r]]
            )
