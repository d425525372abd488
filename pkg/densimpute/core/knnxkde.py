"""
kNN x KDE imputer.

Rows are grouped by missing pattern. For every imputee row, donors (rows
observed on all of the pattern's columns) are weighted by a softmax over
NaN-std-Euclidean distances; the imputation distribution of the row is a
mixture of Gaussian kernels of bandwidth h centred on the donors' values,
with one weight vector shared by all missing columns of the row.

Everything inside this module is expressed in min-max normalized
coordinates; `impute` normalizes on the way in and denormalizes the point
estimates on the way out.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, signal, special
from scipy.stats import norm

from densimpute.core.distance import pairwise_nan_euclidean, pairwise_nan_std_euclidean
from densimpute.data.dataset import (
    AllMissingError,
    DataMatrix,
    DimensionError,
    NormalizationParams,
    column_stats,
    denormalize,
    normalize,
)

log = structlog.get_logger()

DEFAULT_BANDWIDTH = 0.03
DEFAULT_INV_TAU = 50.0
DEFAULT_N_DRAWS = 10_000
WEIGHT_TOL = 1e-9

# Mode search grid; same support as the likelihood histogram at 10x resolution
MODE_GRID = np.linspace(-0.1, 1.1, 1201)


class PointStrategy(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"
    MODE = "mode"
    SAMPLE = "sample"


class DistanceMetric(str, Enum):
    NAN_STD_EUCLIDEAN = "nan_std_euclidean"
    NAN_EUCLIDEAN = "nan_euclidean"


class EmptyDonorsError(RuntimeError):
    """No donor is available for an imputee row."""


class KnnXKdeConfig(BaseModel):
    """Hyperparameters. tau is the softmax temperature, usually quoted as 1/tau."""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(default=1.0 / DEFAULT_INV_TAU, gt=0)
    h: float = Field(default=DEFAULT_BANDWIDTH, gt=0)
    n_draws: int = Field(default=DEFAULT_N_DRAWS, ge=1)
    metric: DistanceMetric = DistanceMetric.NAN_STD_EUCLIDEAN

    @classmethod
    def from_inverse_tau(cls, inv_tau: float, **kwargs) -> "KnnXKdeConfig":
        if inv_tau <= 0:
            raise ValueError(f"1/tau must be positive, got {inv_tau}")
        return cls(tau=1.0 / inv_tau, **kwargs)

    @property
    def inverse_tau(self) -> float:
        return 1.0 / self.tau


# ── Distribution types ────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class MissingPatternGroup:
    pattern: np.ndarray       # bool, True = missing column
    imputee_rows: np.ndarray
    donor_rows: np.ndarray

    @property
    def missing_columns(self) -> np.ndarray:
        return np.flatnonzero(self.pattern)

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(int(k) for k in self.missing_columns)


@dataclass(frozen=True, eq=False)
class CellDistribution:
    """Gaussian mixture for one missing cell."""
    row: int
    col: int
    donor_values: np.ndarray
    weights: np.ndarray
    bandwidth: float
    fallback: bool = False

    def __post_init__(self):
        if self.donor_values.shape != self.weights.shape:
            raise DimensionError(
                f"{self.donor_values.shape[0]} donor values vs {self.weights.shape[0]} weights"
            )
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("Weights must be nonnegative and sum to 1")

    def to_dict(self) -> dict:
        keep = self.weights > 0
        return {
            "row": self.row,
            "col": self.col,
            "donor_values": self.donor_values[keep].tolist(),
            "weights": self.weights[keep].tolist(),
            "bandwidth": self.bandwidth,
            "fallback": self.fallback,
        }


@dataclass(frozen=True, eq=False)
class RowDistribution:
    """Joint mixture over a row's missing columns; one weight per donor row."""
    row: int
    missing_columns: tuple[int, ...]
    donor_matrix: np.ndarray  # n_donors x K
    weights: np.ndarray
    bandwidth: float

    @property
    def n_missing(self) -> int:
        return len(self.missing_columns)

    def cell(self, j: int) -> CellDistribution:
        return CellDistribution(
            row=self.row,
            col=self.missing_columns[j],
            donor_values=self.donor_matrix[:, j],
            weights=self.weights,
            bandwidth=self.bandwidth,
        )

    def cells(self) -> list[CellDistribution]:
        return [self.cell(j) for j in range(self.n_missing)]


@dataclass
class KnnXKdeResult:
    imputed: DataMatrix
    config: KnnXKdeConfig
    row_distributions: list[RowDistribution] = field(default_factory=list)
    fallback_cells: dict[tuple[int, int], CellDistribution] = field(default_factory=dict)
    fallback_count: int = 0
    normalization: NormalizationParams | None = None

    def cell_distributions(self) -> Iterator[CellDistribution]:
        cells = [c for rd in self.row_distributions for c in rd.cells()]
        cells.extend(self.fallback_cells.values())
        yield from sorted(cells, key=lambda c: (c.row, c.col))

    def distribution_for(self, row: int, col: int) -> CellDistribution:
        if (row, col) in self.fallback_cells:
            return self.fallback_cells[(row, col)]
        for rd in self.row_distributions:
            if rd.row == row and col in rd.missing_columns:
                return rd.cell(rd.missing_columns.index(col))
        raise KeyError(f"No distribution for cell ({row}, {col})")

    def row_distribution(self, row: int) -> RowDistribution | None:
        return next((rd for rd in self.row_distributions if rd.row == row), None)


# ── Patterns and weights ──────────────────────────────────────────────────

def enumerate_patterns(mask: np.ndarray) -> list[MissingPatternGroup]:
    """One group per distinct missing pattern among incomplete rows. mask: True = observed."""
    observed = np.asarray(mask, dtype=bool)
    missing = ~observed
    empty_rows = np.flatnonzero(missing.all(axis=1))
    if empty_rows.size:
        raise AllMissingError(f"Row(s) {empty_rows[:10].tolist()} have no observed feature")

    incomplete = np.flatnonzero(missing.any(axis=1))
    if incomplete.size == 0:
        return []
    patterns, inverse = np.unique(missing[incomplete], axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()

    groups = []
    for p, pattern in enumerate(patterns):
        donors = np.flatnonzero(observed[:, pattern].all(axis=1))
        groups.append(MissingPatternGroup(
            pattern=pattern.copy(),
            imputee_rows=incomplete[inverse == p],
            donor_rows=donors,
        ))
    return groups


def softmax_weights(distances, tau: float) -> np.ndarray:
    """exp(-(d - d_min)/tau), normalized along the last axis. +inf distances get weight 0."""
    d = np.asarray(distances, dtype=float)
    d_min = np.min(d, axis=-1, keepdims=True)
    if not np.isfinite(d_min).all():
        raise EmptyDonorsError("Every donor is at infinite distance")
    w = np.exp(-(d - d_min) / tau)
    return w / w.sum(axis=-1, keepdims=True)


def _distances(imputees: np.ndarray, donors: np.ndarray, sigma: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    if metric is DistanceMetric.NAN_EUCLIDEAN:
        return pairwise_nan_euclidean(imputees, donors)
    return pairwise_nan_std_euclidean(imputees, donors, sigma)


def donor_weights(
    imputee_row,
    donor_matrix,
    sigma,
    tau: float,
    metric: DistanceMetric = DistanceMetric.NAN_STD_EUCLIDEAN,
) -> np.ndarray:
    """Softmax weights of every donor row (full D-wide rows) for one imputee row."""
    donors = np.atleast_2d(np.asarray(donor_matrix, dtype=float))
    if donors.shape[0] == 0 or donors.size == 0:
        raise EmptyDonorsError("Empty donor set")
    row = np.asarray(imputee_row, dtype=float)[None, :]
    return softmax_weights(_distances(row, donors, np.asarray(sigma, dtype=float), DistanceMetric(metric))[0], tau)


# ── Densities ─────────────────────────────────────────────────────────────

def marginal_density(dist: CellDistribution, x):
    x = np.asarray(x, dtype=float)
    dens = norm.pdf(x[..., None], loc=dist.donor_values, scale=dist.bandwidth) @ dist.weights
    return float(dens) if dens.ndim == 0 else dens


def marginal_logpdf(dist: CellDistribution, x):
    x = np.asarray(x, dtype=float)
    logk = norm.logpdf(x[..., None], loc=dist.donor_values, scale=dist.bandwidth)
    out = special.logsumexp(logk, b=dist.weights, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def joint_density(dist: RowDistribution, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != dist.n_missing:
        raise DimensionError(f"Expected a vector of length {dist.n_missing}, got {x.shape[0]}")
    logk = norm.logpdf(x, loc=dist.donor_matrix, scale=dist.bandwidth).sum(axis=1)
    return float(np.exp(special.logsumexp(logk, b=dist.weights)))


# ── Sampling and point estimates ──────────────────────────────────────────

def sample_cell(dist: CellDistribution, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(dist.weights.shape[0], size=n_draws, p=dist.weights)
    return dist.donor_values[idx] + rng.normal(0.0, dist.bandwidth, size=n_draws)


def sample_row(dist: RowDistribution, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """n_draws x K joint draws; every column of a draw comes from the same donor."""
    idx = rng.choice(dist.weights.shape[0], size=n_draws, p=dist.weights)
    noise = rng.normal(0.0, dist.bandwidth, size=(n_draws, dist.n_missing))
    return dist.donor_matrix[idx] + noise


def sample_imputations(
    group: MissingPatternGroup,
    X_norm: DataMatrix,
    config: KnnXKdeConfig,
    rng: np.random.Generator,
    sigma: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Joint draws (n_draws x K) for every imputee row of a group."""
    if group.donor_rows.size == 0:
        raise EmptyDonorsError(f"Pattern {group.key} has no donor")
    sigma = column_stats(X_norm).std if sigma is None else sigma
    rows = _group_row_distributions(group, X_norm.values, sigma, config)
    if any(rd is None for rd in rows):
        raise EmptyDonorsError(f"Pattern {group.key}: some rows have no reachable donor")
    return [sample_row(rd, config.n_draws, rng) for rd in rows]


def point_estimate(
    dist: CellDistribution,
    strategy: PointStrategy | str = PointStrategy.MEAN,
    rng: np.random.Generator | None = None,
) -> float:
    strategy = PointStrategy(strategy)
    v, w, h = dist.donor_values, dist.weights, dist.bandwidth
    if strategy is PointStrategy.MEAN:
        return float(w @ v)
    if strategy is PointStrategy.MEDIAN:
        def excess(x: float) -> float:
            return float(w @ norm.cdf((x - v) / h)) - 0.5
        return float(optimize.brentq(excess, v.min() - 10 * h, v.max() + 10 * h, xtol=1e-12))
    if strategy is PointStrategy.MODE:
        return float(MODE_GRID[np.argmax(marginal_density(dist, MODE_GRID))])
    if rng is None:
        raise ValueError("Sampling a point estimate needs an rng")
    return float(sample_cell(dist, 1, rng)[0])


def count_modes(values, prominence: float = 0.1) -> int:
    """Peaks of a histogram or density grid with prominence >= fraction of the maximum."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or arr.max() <= 0:
        return 0
    padded = np.concatenate([[0.0], arr, [0.0]])
    peaks, _ = signal.find_peaks(padded, prominence=prominence * arr.max())
    return int(peaks.size)


def histogram_modes(samples, bins: int = 120, lo: float = -0.1, hi: float = 1.1, prominence: float = 0.1) -> int:
    counts, _ = np.histogram(samples, bins=bins, range=(lo, hi))
    return count_modes(counts, prominence=prominence)


# ── Imputation ────────────────────────────────────────────────────────────

def _group_row_distributions(
    group: MissingPatternGroup,
    values: np.ndarray,
    sigma: np.ndarray,
    config: KnnXKdeConfig,
) -> list[RowDistribution | None]:
    """Row mixtures for a group; None where the row has no reachable donor."""
    n_imp = group.imputee_rows.size
    if group.donor_rows.size == 0:
        return [None] * n_imp
    cols = group.missing_columns
    donors = values[group.donor_rows]
    donor_block = donors[:, cols]
    dist = _distances(values[group.imputee_rows], donors, sigma, config.metric)

    out: list[RowDistribution | None] = [None] * n_imp
    reachable = np.isfinite(dist).any(axis=1)
    if reachable.any():
        weights = softmax_weights(dist[reachable], config.tau)
        for w, i in zip(weights, np.flatnonzero(reachable)):
            out[i] = RowDistribution(
                row=int(group.imputee_rows[i]),
                missing_columns=tuple(int(k) for k in cols),
                donor_matrix=donor_block,
                weights=w,
                bandwidth=config.h,
            )
    return out


def _column_marginal(values: np.ndarray, row: int, col: int, h: float) -> CellDistribution:
    observed = values[~np.isnan(values[:, col]), col]
    return CellDistribution(
        row=row,
        col=col,
        donor_values=observed,
        weights=np.full(observed.shape[0], 1.0 / observed.shape[0]),
        bandwidth=h,
        fallback=True,
    )


@dataclass
class _GroupOutcome:
    rows: np.ndarray
    cols: np.ndarray
    estimates: np.ndarray
    row_distributions: list[RowDistribution]
    fallback_cells: dict[tuple[int, int], CellDistribution]


def _impute_group(
    group: MissingPatternGroup,
    values: np.ndarray,
    sigma: np.ndarray,
    config: KnnXKdeConfig,
    strategy: PointStrategy,
    rng: np.random.Generator,
    keep_distributions: bool,
) -> _GroupOutcome:
    cols = group.missing_columns
    estimates = np.empty((group.imputee_rows.size, cols.size))
    kept: list[RowDistribution] = []
    fallback: dict[tuple[int, int], CellDistribution] = {}

    for i, rd in enumerate(_group_row_distributions(group, values, sigma, config)):
        row = int(group.imputee_rows[i])
        if rd is None:
            for j, col in enumerate(cols):
                cell = _column_marginal(values, row, int(col), config.h)
                estimates[i, j] = point_estimate(cell, strategy, rng)
                fallback[(row, int(col))] = cell
            continue
        if strategy is PointStrategy.MEAN:
            estimates[i] = rd.weights @ rd.donor_matrix
        elif strategy is PointStrategy.SAMPLE:
            estimates[i] = sample_row(rd, 1, rng)[0]
        else:
            estimates[i] = [point_estimate(c, strategy) for c in rd.cells()]
        if keep_distributions:
            kept.append(rd)

    if fallback:
        log.warning("knnxkde_empty_donors", pattern=list(group.key), cells=len(fallback))
    return _GroupOutcome(
        rows=group.imputee_rows,
        cols=cols,
        estimates=estimates,
        row_distributions=kept,
        fallback_cells=fallback,
    )


def impute(
    X: DataMatrix,
    config: KnnXKdeConfig | None = None,
    strategy: PointStrategy | str = PointStrategy.MEAN,
    rng: np.random.Generator | int | None = None,
    threads: int = 1,
    keep_distributions: bool = True,
) -> KnnXKdeResult:
    """Fill every missing cell of X; distributions are returned in normalized coordinates."""
    config = config or KnnXKdeConfig()
    strategy = PointStrategy(strategy)
    rng = np.random.default_rng(rng)
    start = time.time()

    groups = enumerate_patterns(X.mask)
    if not groups:
        return KnnXKdeResult(imputed=X, config=config)

    X_norm, params = normalize(X)
    values = X_norm.values
    sigma = column_stats(X_norm).std
    # one stream per pattern group, keyed by the pattern itself
    entropy = int(rng.integers(2**63))

    def run(group: MissingPatternGroup) -> _GroupOutcome:
        group_rng = np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=group.key))
        return _impute_group(group, values, sigma, config, strategy, group_rng, keep_distributions)

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, groups))
    else:
        outcomes = [run(g) for g in groups]

    filled = values.copy()
    result = KnnXKdeResult(imputed=X, config=config, normalization=params)
    for outcome in outcomes:
        filled[np.ix_(outcome.rows, outcome.cols)] = outcome.estimates
        result.row_distributions.extend(outcome.row_distributions)
        result.fallback_count += len(outcome.fallback_cells)
        if keep_distributions:
            result.fallback_cells.update(outcome.fallback_cells)
    result.row_distributions.sort(key=lambda rd: rd.row)

    raw = denormalize(X_norm.with_values(filled), params).values
    missing = X.missing_mask
    out = X.values.copy()
    out[missing] = raw[missing]
    result.imputed = X.with_values(out)

    log.info(
        "knnxkde_impute_complete",
        groups=len(groups),
        cells=int(missing.sum()),
        fallback_count=result.fallback_count,
        inverse_tau=config.inverse_tau,
        duration=f"{time.time() - start:.2f}s",
    )
    return result


# ── Exports ───────────────────────────────────────────────────────────────

def distributions_to_json(result: KnnXKdeResult, column_names: tuple[str, ...] = ()) -> dict:
    return {
        "coordinates": "normalized",
        "normalization": result.normalization.to_dict() if result.normalization else None,
        "bandwidth": result.config.h,
        "inverse_tau": result.config.inverse_tau,
        "fallback_count": result.fallback_count,
        "cells": [
            {**cell.to_dict(), "column": column_names[cell.col] if column_names else None}
            for cell in result.cell_distributions()
        ],
    }


def samples_to_frame(
    result: KnnXKdeResult,
    n_draws: int,
    rng: np.random.Generator,
    denormalize_samples: bool = True,
) -> pd.DataFrame:
    """One row per draw: row index, draw index, and a value for every missing column of that row."""
    names = list(result.imputed.column_names)
    params = result.normalization
    frames = []

    def emit(row: int, cols: list[int], draws: np.ndarray) -> None:
        block = np.full((n_draws, len(names)), np.nan)
        block[:, cols] = draws
        if denormalize_samples and params is not None:
            block[:, cols] = block[:, cols] * params.span[cols] + params.mins[cols]
        frame = pd.DataFrame(block, columns=names)
        frame.insert(0, "draw", np.arange(n_draws))
        frame.insert(0, "row", row)
        frames.append(frame)

    for rd in result.row_distributions:
        emit(rd.row, list(rd.missing_columns), sample_row(rd, n_draws, rng))

    by_row: dict[int, list[CellDistribution]] = {}
    for (row, _), cell in sorted(result.fallback_cells.items()):
        by_row.setdefault(row, []).append(cell)
    for row, cells in by_row.items():
        # no shared donor exists; cells are drawn independently
        draws = np.column_stack([sample_cell(c, n_draws, rng) for c in cells])
        emit(row, [c.col for c in cells], draws)

    if not frames:
        return pd.DataFrame(columns=["row", "draw", *names])
    return pd.concat(frames, ignore_index=True).sort_values(["row", "draw"], kind="stable").reset_index(drop=True)
