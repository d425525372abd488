"""
Reference imputers: kNN-Imputer, MICE, SoftImpute, column mean / median.

Each takes a DataMatrix and returns a filled copy. kNN, MICE and mean also
return one Gaussian model per missing cell so their imputations can be
scored with a log-likelihood, like the density-based imputer.
"""

from dataclasses import dataclass, field

import numpy as np
import structlog
from scipy.stats import norm

from densimpute.core.distance import pairwise_nan_euclidean
from densimpute.data.dataset import DataMatrix, column_stats

log = structlog.get_logger()

SIGMA_FLOOR = 1e-6
RIDGE_PENALTY = 1e-8
MICE_ITERS = 10
MICE_REPEATS = 5


@dataclass(frozen=True)
class GaussianCellModel:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma >= SIGMA_FLOOR:
            raise ValueError(f"sigma must be >= {SIGMA_FLOOR}, got {self.sigma}")

    @classmethod
    def floored(cls, mu: float, sigma: float) -> "GaussianCellModel":
        return cls(mu=float(mu), sigma=max(float(sigma), SIGMA_FLOOR))

    def logpdf(self, x: float) -> float:
        return float(norm.logpdf(x, loc=self.mu, scale=self.sigma))


@dataclass
class BaselineResult:
    imputed: DataMatrix
    cell_models: dict[tuple[int, int], GaussianCellModel] = field(default_factory=dict)


@dataclass
class SoftImputeResult:
    imputed: DataMatrix
    objective_trace: list[float]
    n_iters: int
    converged: bool


def _missing_cells(missing: np.ndarray) -> list[tuple[int, int]]:
    return [(int(i), int(j)) for i, j in np.argwhere(missing)]


# ── kNN ───────────────────────────────────────────────────────────────────

def knn_impute(X: DataMatrix, k: int) -> BaselineResult:
    """Mean of the k nearest rows (nan_euclidean) observed in the target column."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    values = X.values
    missing = X.missing_mask
    stats = column_stats(X)
    out = values.copy()
    models: dict[tuple[int, int], GaussianCellModel] = {}
    fallbacks = 0

    for c in range(X.n_cols):
        receivers = np.flatnonzero(missing[:, c])
        if receivers.size == 0:
            continue
        donors = np.flatnonzero(~missing[:, c])
        dist = pairwise_nan_euclidean(values[receivers], values[donors])
        kk = min(k, donors.size)
        order = np.argsort(dist, axis=1, kind="stable")[:, :kk]
        nearest = np.take_along_axis(dist, order, axis=1)
        neighbour_values = values[donors[order], c]
        usable = np.isfinite(nearest)
        counts = usable.sum(axis=1)

        for r, row in enumerate(receivers):
            if counts[r] == 0:
                mu, sigma = stats.mean[c], stats.std[c]
                fallbacks += 1
            else:
                picked = neighbour_values[r, usable[r]]
                mu, sigma = picked.mean(), picked.std()
            out[row, c] = mu
            models[(int(row), c)] = GaussianCellModel.floored(mu, sigma)

    if fallbacks:
        log.warning("knn_column_mean_fallback", cells=fallbacks)
    return BaselineResult(imputed=X.with_values(out), cell_models=models)


# ── MICE ──────────────────────────────────────────────────────────────────

def _ols(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Least squares fit; ridge solve when the normal equations are singular."""
    gram = A.T @ A
    rhs = A.T @ y
    singular = np.linalg.matrix_rank(gram) < A.shape[1]
    if singular:
        gram = gram + RIDGE_PENALTY * np.eye(A.shape[1])
    beta = np.linalg.solve(gram, rhs)
    resid = y - A @ beta
    dof = max(y.shape[0] - A.shape[1], 1)
    return beta, float(np.sqrt(resid @ resid / dof)), singular


def _mice_chain(
    values: np.ndarray,
    missing: np.ndarray,
    n_iters: int,
    rng: np.random.Generator,
    noise: bool,
) -> tuple[np.ndarray, int]:
    Z = values.copy()
    means = np.nanmean(values, axis=0)
    Z[missing] = np.take(means, np.nonzero(missing)[1])
    incomplete = missing.any(axis=0)
    ones = np.ones((Z.shape[0], 1))
    ridge_fits = 0

    for _ in range(n_iters):
        for c in rng.permutation(Z.shape[1]):
            if not incomplete[c]:
                continue
            obs = ~missing[:, c]
            A = np.hstack([ones, np.delete(Z, c, axis=1)])
            beta, resid_std, singular = _ols(A[obs], Z[obs, c])
            ridge_fits += singular
            pred = A[~obs] @ beta
            if noise:
                pred = pred + rng.normal(0.0, resid_std, size=pred.shape)
            Z[~obs, c] = pred
    return Z, ridge_fits


def mice_impute(
    X: DataMatrix,
    n_iters: int = MICE_ITERS,
    n_repeats: int = MICE_REPEATS,
    rng: np.random.Generator | int | None = None,
    noise: bool = True,
) -> BaselineResult:
    """Chained OLS regressions with residual noise, repeated with fresh streams.

    The filled value of a cell is its mean over the repeats; its Gaussian
    model is (mean, std) over the repeats.
    """
    if n_iters < 1 or n_repeats < 1:
        raise ValueError("n_iters and n_repeats must be >= 1")
    missing = X.missing_mask
    if not missing.any():
        return BaselineResult(imputed=X)
    column_stats(X)  # rejects fully missing columns

    rng = np.random.default_rng(rng)
    streams = np.random.SeedSequence(int(rng.integers(2**63))).spawn(n_repeats)
    chains = []
    ridge_fits = 0
    for seq in streams:
        Z, fits = _mice_chain(X.values, missing, n_iters, np.random.default_rng(seq), noise)
        chains.append(Z)
        ridge_fits += fits
    if ridge_fits:
        log.warning("mice_ridge_fallback", fits=ridge_fits, penalty=RIDGE_PENALTY)

    stack = np.stack(chains)
    centre = stack.mean(axis=0)
    spread = stack.std(axis=0)
    out = X.values.copy()
    out[missing] = centre[missing]
    models = {
        (i, j): GaussianCellModel.floored(centre[i, j], spread[i, j])
        for i, j in _missing_cells(missing)
    }
    return BaselineResult(imputed=X.with_values(out), cell_models=models)


# ── SoftImpute ────────────────────────────────────────────────────────────

def soft_impute(
    X: DataMatrix,
    lam: float,
    max_iters: int = 100,
    tol: float = 1e-5,
    max_rank: int | None = None,
    center: bool = True,
) -> SoftImputeResult:
    """Soft-thresholded SVD completion, started from the column means."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    values = X.values
    missing = X.missing_mask
    observed = ~missing
    if not missing.any():
        return SoftImputeResult(imputed=X, objective_trace=[], n_iters=0, converged=True)

    col_means = column_stats(X).mean
    offset = col_means if center else np.zeros(X.n_cols)
    centred = values - offset
    target = np.where(observed, centred, 0.0)
    Z = np.tile(col_means - offset, (X.n_rows, 1))

    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        U, s, Vt = np.linalg.svd(np.where(observed, centred, Z), full_matrices=False)
        s = np.maximum(s - lam, 0.0)
        if max_rank is not None:
            s[max_rank:] = 0.0
        Z_new = (U * s) @ Vt

        objective = 0.5 * float(np.sum((target - np.where(observed, Z_new, 0.0)) ** 2)) + lam * float(s.sum())
        if trace and objective > trace[-1] + 1e-9 * max(1.0, abs(trace[-1])):
            log.warning("soft_impute_objective_increase", iteration=it, previous=trace[-1], current=objective)
        trace.append(objective)

        change = np.sum((Z_new - Z) ** 2) / max(float(np.sum(Z ** 2)), np.finfo(float).eps)
        Z = Z_new
        if change < tol:
            converged = True
            break

    out = values.copy()
    out[missing] = (Z + offset)[missing]
    log.debug("soft_impute_complete", lam=lam, iterations=it, converged=converged)
    return SoftImputeResult(imputed=X.with_values(out), objective_trace=trace, n_iters=it, converged=converged)


# ── Column statistics ─────────────────────────────────────────────────────

def mean_median_impute(X: DataMatrix, strategy: str = "mean") -> BaselineResult:
    if strategy not in ("mean", "median"):
        raise ValueError(f"strategy must be 'mean' or 'median', got {strategy!r}")
    stats = column_stats(X)
    fill = stats.mean if strategy == "mean" else np.nanmedian(X.values, axis=0)
    missing = X.missing_mask
    out = X.values.copy()
    out[missing] = np.take(fill, np.nonzero(missing)[1])

    models: dict[tuple[int, int], GaussianCellModel] = {}
    if strategy == "mean":
        models = {
            (i, j): GaussianCellModel.floored(stats.mean[j], stats.std[j])
            for i, j in _missing_cells(missing)
        }
    return BaselineResult(imputed=X.with_values(out), cell_models=models)
