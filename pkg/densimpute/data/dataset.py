"""
Numerical tables with missing entries.

DataMatrix is the value every other module works on: an N x D float array
where NaN marks a missing cell, plus column names. This module covers:
- CSV ingestion and export (missing cells as configurable tokens / empty string)
- min-max normalization and its inverse
- per-column statistics over observed cells
- pairwise Pearson / Spearman summaries
- bundled real datasets shipped as package data (geyser)
"""

import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
import structlog
from scipy import stats

log = structlog.get_logger()

DEFAULT_MISSING_TOKENS = frozenset({"", "NaN", "nan", "NA"})
MIN_CORRELATION_ROWS = 3

# name -> CSV shipped inside this package
BUNDLED_DATASETS = {"geyser": "geyser.csv"}


class DatasetError(ValueError):
    """Base error for invalid tables."""


class DimensionError(DatasetError):
    """Wrong number of columns, or shapes that do not line up."""


class ParseError(DatasetError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Cannot parse {value!r} at data row {row}, column {column!r}")


class AllMissingError(DatasetError):
    """A row or a column has no observed cell."""


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """N x D real table; NaN is the missing marker. Immutable after construction."""
    values: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DimensionError(f"Expected a 2-D table, got {values.ndim} dimension(s)")
        if values.shape[1] < 2:
            raise DimensionError(f"Need at least 2 columns, got {values.shape[1]}")
        names = tuple(str(c) for c in self.column_names) or tuple(
            f"x{k + 1}" for k in range(values.shape[1])
        )
        if len(names) != values.shape[1]:
            raise DimensionError(
                f"{len(names)} column names for {values.shape[1]} columns"
            )
        if np.isinf(values).any():
            raise DatasetError("Observed values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", names)

    @classmethod
    def from_array(cls, values, column_names=None) -> "DataMatrix":
        return cls(values=np.asarray(values, dtype=float), column_names=tuple(column_names or ()))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def mask(self) -> np.ndarray:
        """Observed-cell indicator: True where the value is present."""
        return ~np.isnan(self.values)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    def with_values(self, values: np.ndarray) -> "DataMatrix":
        return DataMatrix(values=values, column_names=self.column_names)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values.copy(), columns=list(self.column_names))


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.maxs - self.mins

    @property
    def degenerate(self) -> np.ndarray:
        return self.span == 0

    def to_dict(self) -> dict:
        return {"min": self.mins.tolist(), "max": self.maxs.tolist()}


@dataclass(frozen=True, eq=False)
class ColumnStats:
    column_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    observed_count: np.ndarray

    def to_dict(self) -> dict:
        return {
            name: {
                "mean": float(self.mean[k]),
                "std": float(self.std[k]),
                "observed_count": int(self.observed_count[k]),
            }
            for k, name in enumerate(self.column_names)
        }


@dataclass(frozen=True, eq=False)
class CorrelationSummary:
    column_names: tuple[str, ...]
    pearson: np.ndarray
    spearman: np.ndarray
    pearson_mean: float
    pearson_std: float
    spearman_mean: float
    spearman_std: float
    undefined_pairs: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        def _matrix(m: np.ndarray) -> list[list[float | None]]:
            return [[None if np.isnan(v) else float(v) for v in row] for row in m]

        return {
            "columns": list(self.column_names),
            "pearson": _matrix(self.pearson),
            "spearman": _matrix(self.spearman),
            "pearson_abs_mean": self.pearson_mean,
            "pearson_abs_std": self.pearson_std,
            "spearman_abs_mean": self.spearman_mean,
            "spearman_abs_std": self.spearman_std,
            "undefined_pairs": [list(p) for p in self.undefined_pairs],
        }


# ── CSV I/O ───────────────────────────────────────────────────────────────

def load_csv(path: str | Path, missing_tokens: frozenset[str] | set[str] = DEFAULT_MISSING_TOKENS) -> DataMatrix:
    """Read a headered numeric CSV. Cells matching a missing token become NaN."""
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    if frame.shape[1] < 2:
        raise DimensionError(f"{path}: need at least 2 columns, got {frame.shape[1]}")

    tokens = set(missing_tokens)
    columns: list[np.ndarray] = []
    for name in frame.columns:
        raw = frame[name].str.strip()
        is_token = raw.isin(tokens)
        masked = raw.where(~is_token)
        try:
            # str -> float conversion rounds correctly, so %.17g text reads back exactly
            numeric = masked.astype(float).to_numpy()
        except ValueError:
            numeric = pd.to_numeric(masked, errors="coerce").to_numpy(dtype=float)
        bad = ~is_token.to_numpy() & ~np.isfinite(numeric)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ParseError(row=row, column=str(name), value=str(raw.iloc[row]))
        columns.append(numeric)

    values = np.column_stack(columns) if columns else np.empty((0, 0))
    matrix = DataMatrix(values=values, column_names=tuple(frame.columns))
    empty = np.flatnonzero(matrix.mask.sum(axis=0) == 0)
    if empty.size:
        raise AllMissingError(
            f"{path}: column(s) {[matrix.column_names[k] for k in empty]} have no observed value"
        )
    log.info("csv_loaded", path=str(path), rows=matrix.n_rows, cols=matrix.n_cols, missing=matrix.n_missing)
    return matrix


def write_csv(X: DataMatrix, path: str | Path) -> Path:
    """Write X with a header; missing cells become empty strings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X.to_frame().to_csv(path, index=False, na_rep="", float_format="%.17g", encoding="utf-8")
    return path


def bundled_path(name: str) -> Path | None:
    """Filesystem path of a dataset shipped with the package, None if the name is not bundled."""
    filename = BUNDLED_DATASETS.get(name)
    if filename is None:
        return None
    return Path(str(resources.files("densimpute.data").joinpath(filename)))


def load_bundled(name: str) -> DataMatrix:
    path = bundled_path(name)
    if path is None:
        raise KeyError(f"No bundled dataset {name!r}; available: {', '.join(sorted(BUNDLED_DATASETS))}")
    return load_csv(path)


# ── Normalization ─────────────────────────────────────────────────────────

def _require_observed_columns(X: DataMatrix) -> None:
    counts = X.mask.sum(axis=0)
    if (counts == 0).any():
        cols = [X.column_names[k] for k in np.flatnonzero(counts == 0)]
        raise AllMissingError(f"Column(s) {cols} have no observed value")


def normalize(X: DataMatrix) -> tuple[DataMatrix, NormalizationParams]:
    """Min-max scale each column to [0, 1] over observed cells. Constant columns map to 0."""
    _require_observed_columns(X)
    mins = np.nanmin(X.values, axis=0)
    maxs = np.nanmax(X.values, axis=0)
    params = NormalizationParams(mins=mins, maxs=maxs)
    return apply_normalization(X, params), params


def apply_normalization(X: DataMatrix, params: NormalizationParams) -> DataMatrix:
    """Scale X with params computed elsewhere (e.g. truth scaled like its amputed copy)."""
    if X.n_cols != params.mins.shape[0]:
        raise DimensionError(f"Params cover {params.mins.shape[0]} columns, matrix has {X.n_cols}")
    span = np.where(params.degenerate, 1.0, params.span)
    scaled = (X.values - params.mins) / span
    scaled[:, params.degenerate] = np.where(
        np.isnan(X.values[:, params.degenerate]), np.nan, 0.0
    )
    return X.with_values(scaled)


def denormalize(X: DataMatrix, params: NormalizationParams) -> DataMatrix:
    if X.n_cols != params.mins.shape[0]:
        raise DimensionError(f"Params cover {params.mins.shape[0]} columns, matrix has {X.n_cols}")
    raw = X.values * params.span + params.mins
    # degenerate columns collapse to the stored constant
    raw[:, params.degenerate] = np.where(
        np.isnan(X.values[:, params.degenerate]), np.nan, params.mins[params.degenerate]
    )
    return X.with_values(raw)


# ── Summaries ─────────────────────────────────────────────────────────────

def column_stats(X: DataMatrix) -> ColumnStats:
    """Mean and population std over observed cells."""
    _require_observed_columns(X)
    return ColumnStats(
        column_names=X.column_names,
        mean=np.nanmean(X.values, axis=0),
        std=np.nanstd(X.values, axis=0),
        observed_count=X.mask.sum(axis=0),
    )


def _abs_summary(matrix: np.ndarray) -> tuple[float, float]:
    upper = matrix[np.triu_indices_from(matrix, k=1)]
    upper = np.abs(upper[~np.isnan(upper)])
    if upper.size == 0:
        return float("nan"), float("nan")
    return float(upper.mean()), float(upper.std())


def correlation_summary(X: DataMatrix) -> CorrelationSummary:
    """Pairwise-complete Pearson and Spearman matrices with |r| mean and std."""
    d = X.n_cols
    pearson = np.eye(d)
    spearman = np.eye(d)
    undefined: list[tuple[int, int]] = []
    observed = X.mask

    for a in range(d):
        for b in range(a + 1, d):
            rows = observed[:, a] & observed[:, b]
            xa, xb = X.values[rows, a], X.values[rows, b]
            r_p = r_s = float("nan")
            if rows.sum() >= MIN_CORRELATION_ROWS:
                with warnings.catch_warnings():
                    # constant input yields nan, handled as undefined below
                    warnings.simplefilter("ignore")
                    r_p = float(stats.pearsonr(xa, xb)[0])
                    r_s = float(stats.spearmanr(xa, xb)[0])
            if np.isnan(r_p) or np.isnan(r_s):
                undefined.append((a, b))
            pearson[a, b] = pearson[b, a] = r_p
            spearman[a, b] = spearman[b, a] = r_s

    p_mean, p_std = _abs_summary(pearson)
    s_mean, s_std = _abs_summary(spearman)
    if undefined:
        log.warning("correlation_undefined_pairs", pairs=undefined)
    return CorrelationSummary(
        column_names=X.column_names,
        pearson=pearson,
        spearman=spearman,
        pearson_mean=p_mean,
        pearson_std=p_std,
        spearman_mean=s_mean,
        spearman_std=s_std,
        undefined_pairs=undefined,
    )
