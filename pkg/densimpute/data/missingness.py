"""
Missingness injection ("amputation") for benchmarking.

Mechanisms:
- Full MCAR: every cell independently, rows never left empty
- MCAR: one column, completely at random
- MAR: one column, probability driven by another column's median side
  (ties at the median are split at random to keep the sides equal)
- MNAR: one column, probability driven by its own median side

Masks use the observed convention: True = value present.
"""

from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from densimpute.data.dataset import DataMatrix, DimensionError

log = structlog.get_logger()

MAX_REDRAWS = 1000
MAX_HALF_RATE = 0.5


class AmputationError(ValueError):
    """Scenario cannot be applied to the given data."""


class Mechanism(str, Enum):
    FULL_MCAR = "full_mcar"
    MCAR = "mcar"
    MAR = "mar"
    MNAR = "mnar"

    @property
    def label(self) -> str:
        return {"full_mcar": "Full MCAR", "mcar": "MCAR", "mar": "MAR", "mnar": "MNAR"}[self.value]


class ScenarioSpec(BaseModel):
    """Amputation recipe. Column indices are 0-based."""
    model_config = ConfigDict(frozen=True)

    mechanism: Mechanism
    rate: float = Field(ge=0.0, lt=1.0)
    miss_col: int | None = Field(default=None, ge=0)
    cond_col: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "ScenarioSpec":
        if self.mechanism in (Mechanism.MAR, Mechanism.MNAR) and self.rate > MAX_HALF_RATE:
            raise ValueError(f"{self.mechanism.label} needs rate <= {MAX_HALF_RATE}, got {self.rate}")
        if self.miss_col is not None and self.miss_col == self.cond_col:
            raise ValueError("miss_col and cond_col must differ")
        return self

    @property
    def label(self) -> str:
        return f"{self.mechanism.label} {round(self.rate * 100)}%"

    def resolve(self, n_cols: int) -> "ScenarioSpec":
        """Fill default columns: miss_col = last column, cond_col = first other column."""
        if self.mechanism is Mechanism.FULL_MCAR:
            return self
        miss = n_cols - 1 if self.miss_col is None else self.miss_col
        cond = self.cond_col
        if self.mechanism is Mechanism.MAR and cond is None:
            cond = 0 if miss != 0 else 1
        for name, col in (("miss_col", miss), ("cond_col", cond)):
            if col is not None and col >= n_cols:
                raise DimensionError(f"{name}={col} out of range for {n_cols} columns")
        return self.model_copy(update={"miss_col": miss, "cond_col": cond})


def _require_complete(X: DataMatrix) -> None:
    if X.n_missing:
        raise AmputationError(f"Amputation needs a complete matrix, found {X.n_missing} missing cells")


def _single_column_mask(n_rows: int, n_cols: int, miss_col: int, missing: np.ndarray) -> np.ndarray:
    mask = np.ones((n_rows, n_cols), dtype=bool)
    mask[:, miss_col] = ~missing
    return mask


def _draw_column(prob: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli draw that is redrawn while it would empty the whole column."""
    for _ in range(MAX_REDRAWS):
        missing = rng.random(prob.shape[0]) < prob
        if not missing.all():
            return missing
    raise AmputationError("Could not draw a mask that keeps the column observed")


def ampute_full_mcar(X: DataMatrix, rate: float, rng: np.random.Generator) -> np.ndarray:
    _require_complete(X)
    if not 0.0 <= rate < 1.0:
        raise AmputationError(f"rate must be in [0, 1), got {rate}")
    n, d = X.values.shape

    for _ in range(MAX_REDRAWS):
        missing = rng.random((n, d)) < rate
        empty = missing.all(axis=1)
        while empty.any():
            # redraw the whole row rather than flipping one cell
            missing[empty] = rng.random((int(empty.sum()), d)) < rate
            empty = missing.all(axis=1)
        if not missing.all(axis=0).any():
            return ~missing
    raise AmputationError("Could not draw a mask that keeps every column observed")


def ampute_mcar(X: DataMatrix, rate: float, miss_col: int, rng: np.random.Generator) -> np.ndarray:
    _require_complete(X)
    missing = _draw_column(np.full(X.n_rows, rate), rng)
    return _single_column_mask(X.n_rows, X.n_cols, miss_col, missing)


def _upper_half(column: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Rows at or above the median. Tied values straddling it are split at random
    so the upper side always holds n - n // 2 rows."""
    n = column.shape[0]
    if np.unique(column).size == n:
        return column >= np.median(column)
    order = np.lexsort((rng.random(n), column))
    upper = np.zeros(n, dtype=bool)
    upper[order[n // 2:]] = True
    return upper


def _median_side_probability(column: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    if rate > MAX_HALF_RATE:
        raise AmputationError(f"rate must be <= {MAX_HALF_RATE} for MAR/MNAR, got {rate}")
    upper = _upper_half(column, rng)
    return np.clip(np.where(upper, 2.0 * rate, 0.0), 0.0, 1.0)


def ampute_mar(X: DataMatrix, rate: float, miss_col: int, cond_col: int, rng: np.random.Generator) -> np.ndarray:
    _require_complete(X)
    if miss_col == cond_col:
        raise AmputationError("miss_col and cond_col must differ")
    prob = _median_side_probability(X.values[:, cond_col], rate, rng)
    missing = _draw_column(prob, rng)
    return _single_column_mask(X.n_rows, X.n_cols, miss_col, missing)


def ampute_mnar(X: DataMatrix, rate: float, miss_col: int, rng: np.random.Generator) -> np.ndarray:
    _require_complete(X)
    prob = _median_side_probability(X.values[:, miss_col], rate, rng)
    missing = _draw_column(prob, rng)
    return _single_column_mask(X.n_rows, X.n_cols, miss_col, missing)


def ampute(X: DataMatrix, scenario: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    spec = scenario.resolve(X.n_cols)
    if spec.mechanism is Mechanism.FULL_MCAR:
        mask = ampute_full_mcar(X, spec.rate, rng)
    elif spec.mechanism is Mechanism.MCAR:
        mask = ampute_mcar(X, spec.rate, spec.miss_col, rng)
    elif spec.mechanism is Mechanism.MAR:
        mask = ampute_mar(X, spec.rate, spec.miss_col, spec.cond_col, rng)
    else:
        mask = ampute_mnar(X, spec.rate, spec.miss_col, rng)
    log.debug("amputed", scenario=spec.label, realized_rate=float((~mask).mean()))
    return mask


def apply_mask(X: DataMatrix, mask: np.ndarray) -> DataMatrix:
    if mask.shape != X.values.shape:
        raise DimensionError(f"Mask shape {mask.shape} does not match data {X.values.shape}")
    return X.with_values(np.where(mask, X.values, np.nan))


def write_mask_csv(mask: np.ndarray, path: str | Path, column_names: tuple[str, ...]) -> Path:
    """0/1 CSV with the data's header; 1 = observed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(mask.astype(int), columns=list(column_names)).to_csv(path, index=False, encoding="utf-8")
    return path
