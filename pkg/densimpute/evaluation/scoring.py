"""
Imputation scores on the normalized scale.

- nrmse: root mean squared error over the missing cells
- loglik_histogram: log density of the truth under a 120-bin histogram of draws
- loglik_gaussian / loglik_analytic: exact log densities of the model
"""

import numpy as np
from scipy.stats import norm

from densimpute.core.knnxkde import CellDistribution, marginal_logpdf
from densimpute.methods.baselines import GaussianCellModel

HIST_LO = -0.1
HIST_HI = 1.1
HIST_BINS = 120
HIST_WIDTH = (HIST_HI - HIST_LO) / HIST_BINS


class ScoringError(ValueError):
    """Score is undefined for the given inputs."""


def nrmse(X_truth_norm, X_imputed_norm, mask) -> float:
    """mask: True on the cells that were missing (and are scored)."""
    truth = np.asarray(X_truth_norm, dtype=float)
    imputed = np.asarray(X_imputed_norm, dtype=float)
    scored = np.asarray(mask, dtype=bool)
    if truth.shape != imputed.shape or truth.shape != scored.shape:
        raise ScoringError(f"Shapes differ: {truth.shape}, {imputed.shape}, {scored.shape}")
    n_miss = int(scored.sum())
    if n_miss == 0:
        raise ScoringError("NRMSE is undefined without missing cells")
    err = truth[scored] - imputed[scored]
    return float(np.sqrt(np.sum(err ** 2) / n_miss))


def _bin_index(x) -> np.ndarray:
    return np.floor((np.asarray(x, dtype=float) - HIST_LO) / HIST_WIDTH).astype(int)


def loglik_histogram(samples, truth: float) -> float:
    """ln(count in the truth's bin / (n * width)), with a one-count floor."""
    draws = np.asarray(samples, dtype=float).ravel()
    if draws.size == 0:
        raise ScoringError("Need at least one draw")
    target = int(np.clip(_bin_index(truth), 0, HIST_BINS - 1))
    idx = _bin_index(draws)
    in_range = (draws >= HIST_LO) & (draws <= HIST_HI)
    # the right edge belongs to the last bin
    idx = np.where(draws == HIST_HI, HIST_BINS - 1, idx)
    count = int(np.sum(in_range & (idx == target)))
    return float(np.log(max(count, 1) / (draws.size * HIST_WIDTH)))


def loglik_gaussian(model: GaussianCellModel, truth: float) -> float:
    return float(norm.logpdf(truth, loc=model.mu, scale=model.sigma))


def loglik_analytic(dist: CellDistribution, truth: float) -> float:
    return float(marginal_logpdf(dist, truth))
