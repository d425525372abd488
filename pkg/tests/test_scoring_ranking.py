"""Scores and rank aggregation."""

import numpy as np
import pytest

from densimpute.core.knnxkde import CellDistribution, marginal_logpdf
from densimpute.evaluation.ranking import rank_methods
from densimpute.evaluation.scoring import (
    HIST_BINS,
    HIST_WIDTH,
    ScoringError,
    loglik_analytic,
    loglik_gaussian,
    loglik_histogram,
    nrmse,
)
from densimpute.methods.baselines import GaussianCellModel


def test_nrmse_over_missing_cells_only():
    truth = np.array([[0.0, 1.0], [0.5, 0.5]])
    imputed = np.array([[0.1, 9.0], [0.5, 0.2]])
    mask = np.array([[True, False], [False, True]])
    assert nrmse(truth, imputed, mask) == pytest.approx(np.sqrt((0.01 + 0.09) / 2))


def test_nrmse_invariant_to_row_permutation():
    rng = np.random.default_rng(5)
    truth = rng.random((30, 3))
    imputed = truth + rng.normal(0.0, 0.1, truth.shape)
    mask = rng.random(truth.shape) > 0.3
    perm = rng.permutation(30)
    assert nrmse(truth[perm], imputed[perm], mask[perm]) == pytest.approx(nrmse(truth, imputed, mask), rel=1e-12)


def test_nrmse_errors():
    with pytest.raises(ScoringError):
        nrmse(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), dtype=bool))
    with pytest.raises(ScoringError):
        nrmse(np.zeros((2, 2)), np.zeros((2, 3)), np.ones((2, 2), dtype=bool))


def test_loglik_histogram_counts_truth_bin():
    samples = np.full(100, 0.505)
    assert loglik_histogram(samples, 0.502) == pytest.approx(np.log(1.0 / HIST_WIDTH))
    # empty bin gets the one-count floor
    assert loglik_histogram(samples, 0.9) == pytest.approx(np.log(1.0 / (100 * HIST_WIDTH)))


def test_loglik_histogram_edges():
    samples = np.array([1.1, 1.1, 5.0, -3.0])
    # right edge lands in the last bin, out-of-range draws still count in n
    assert loglik_histogram(samples, 1.1) == pytest.approx(np.log(2 / (4 * HIST_WIDTH)))
    # truth outside the support is clamped to the nearest bin
    assert loglik_histogram(samples, 7.0) == pytest.approx(np.log(2 / (4 * HIST_WIDTH)))
    assert HIST_BINS == 120
    with pytest.raises(ScoringError):
        loglik_histogram([], 0.5)


def test_loglik_histogram_approaches_density():
    rng = np.random.default_rng(0)
    draws = rng.normal(0.5, 0.1, size=200_000)
    expected = -0.5 * np.log(2 * np.pi * 0.01)
    assert loglik_histogram(draws, 0.5) == pytest.approx(expected, abs=0.05)


def test_loglik_gaussian_closed_form():
    model = GaussianCellModel(mu=0.2, sigma=0.1)
    assert loglik_gaussian(model, 0.2) == pytest.approx(-np.log(0.1) - 0.5 * np.log(2 * np.pi))
    assert loglik_gaussian(model, 0.4) == pytest.approx(-np.log(0.1) - 0.5 * np.log(2 * np.pi) - 2.0)


def test_loglik_analytic_uses_mixture():
    dist = CellDistribution(row=0, col=0, donor_values=np.array([0.3, 0.7]), weights=np.array([0.5, 0.5]), bandwidth=0.05)
    assert loglik_analytic(dist, 0.3) == pytest.approx(marginal_logpdf(dist, 0.3))


def test_rank_methods_average_ties_and_std():
    scores = {
        "a": {"knnxkde": 0.1, "mean": 0.3, "mice": 0.2},
        "b": {"knnxkde": 0.2, "mean": 0.2, "mice": 0.5},
    }
    summary = rank_methods(scores, scenario="mcar", rate=0.2)
    assert summary.per_dataset["b"] == {"knnxkde": 1.5, "mean": 1.5, "mice": 3.0}
    assert summary.mean_rank == {"knnxkde": 1.25, "mean": 2.25, "mice": 2.5}
    assert summary.std_rank["knnxkde"] == pytest.approx(0.25)
    rows = summary.to_rows()
    assert [r["method"] for r in rows] == ["knnxkde", "mean", "mice"]
    assert rows[0]["scenario"] == "mcar" and rows[0]["rate"] == 0.2


def test_rank_methods_higher_is_better_and_exclusions():
    scores = {
        "a": {"knnxkde": 0.3, "mean": -0.2, "knn": None},
        "b": {"knnxkde": 0.5, "mean": 0.1, "knn": float("nan")},
    }
    summary = rank_methods(scores, metric="mean_loglik", higher_is_better=True)
    assert summary.mean_rank == {"knnxkde": 1.0, "mean": 2.0}
    assert sorted(summary.excluded) == [("a", "knn"), ("b", "knn")]
    assert summary.n_datasets == {"knnxkde": 2, "mean": 2}
