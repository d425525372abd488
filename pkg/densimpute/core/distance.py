"""
NaN-aware distances between partially observed rows.

Two metrics:
- nan_euclidean: Euclidean over commonly observed features, rescaled by
  D / n_common; +inf when the rows share no observed feature.
- nan_std_euclidean: Euclidean over commonly observed features plus a
  sigma_k^2 penalty for every feature missing in either row.

The per-pair functions are the reference definitions; the pairwise builders
compute the same quantities for whole blocks of rows with matrix products.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from densimpute.data.dataset import DimensionError

DEFAULT_BLOCK_SIZE = 2048


@dataclass(frozen=True)
class RowPairDistance:
    value: float
    n_common: int


def _as_rows(row_i, row_j) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(row_i, dtype=float)
    b = np.asarray(row_j, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"Row shapes differ: {a.shape} vs {b.shape}")
    return a, b


def nan_euclidean(row_i, row_j, n_features: int | None = None) -> RowPairDistance:
    a, b = _as_rows(row_i, row_j)
    d = a.shape[0] if n_features is None else n_features
    common = ~np.isnan(a) & ~np.isnan(b)
    n_common = int(common.sum())
    if n_common == 0:
        return RowPairDistance(value=float("inf"), n_common=0)
    sq = float(np.sum((a[common] - b[common]) ** 2))
    return RowPairDistance(value=float(np.sqrt(d / n_common * sq)), n_common=n_common)


def nan_std_euclidean(row_i, row_j, sigma) -> RowPairDistance:
    a, b = _as_rows(row_i, row_j)
    s = np.asarray(sigma, dtype=float)
    if s.shape != a.shape:
        raise DimensionError(f"sigma has shape {s.shape}, rows have {a.shape}")
    common = ~np.isnan(a) & ~np.isnan(b)
    sq = np.sum((a[common] - b[common]) ** 2) + np.sum(s[~common] ** 2)
    return RowPairDistance(value=float(np.sqrt(sq)), n_common=int(common.sum()))


# ── Pairwise builders ─────────────────────────────────────────────────────

def _block_terms(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared distance over common features and common-feature counts for A x B."""
    obs_a = (~np.isnan(A)).astype(float)
    obs_b = (~np.isnan(B)).astype(float)
    a0 = np.nan_to_num(A, nan=0.0)
    b0 = np.nan_to_num(B, nan=0.0)
    sq = (a0 ** 2) @ obs_b.T - 2.0 * (a0 @ b0.T) + obs_a @ (b0 ** 2).T
    np.maximum(sq, 0.0, out=sq)
    return sq, obs_a @ obs_b.T


def _run_blocks(A: np.ndarray, block_size: int, threads: int, fn) -> np.ndarray:
    starts = range(0, A.shape[0], max(block_size, 1))
    if threads > 1 and A.shape[0] > block_size:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: fn(A[s:s + block_size]), starts))
    else:
        parts = [fn(A[s:s + block_size]) for s in starts]
    if not parts:
        return np.empty((0, 0))
    return np.vstack(parts)


def _check_pair(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"Column counts differ: {A.shape[1]} vs {B.shape[1]}")
    return A, B


def pairwise_nan_euclidean(
    A, B, block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1
) -> np.ndarray:
    """len(A) x len(B) nan_euclidean matrix; +inf where rows share no feature."""
    A, B = _check_pair(A, B)
    n_features = A.shape[1]

    def block(rows: np.ndarray) -> np.ndarray:
        sq, n_common = _block_terms(rows, B)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sqrt(n_features / n_common * sq)
        out[n_common == 0] = np.inf
        return out

    if A.shape[0] == 0:
        return np.empty((0, B.shape[0]))
    return _run_blocks(A, block_size, threads, block)


def pairwise_nan_std_euclidean(
    A, B, sigma, block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1
) -> np.ndarray:
    """len(A) x len(B) nan_std_euclidean matrix."""
    A, B = _check_pair(A, B)
    s2 = np.asarray(sigma, dtype=float) ** 2
    if s2.shape != (A.shape[1],):
        raise DimensionError(f"sigma has shape {s2.shape}, rows have {A.shape[1]} columns")
    obs_b = (~np.isnan(B)).astype(float)
    total_penalty = s2.sum()

    def block(rows: np.ndarray) -> np.ndarray:
        sq, _ = _block_terms(rows, B)
        obs_a = (~np.isnan(rows)).astype(float)
        # penalty over features missing in either row = total - penalty over common ones
        penalty = total_penalty - (obs_a * s2) @ obs_b.T
        return np.sqrt(np.maximum(sq + penalty, 0.0))

    if A.shape[0] == 0:
        return np.empty((0, B.shape[0]))
    return _run_blocks(A, block_size, threads, block)
