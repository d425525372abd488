"""NaN-aware distances: worked values, properties and the sklearn oracle."""

import numpy as np
import pytest
from sklearn.metrics.pairwise import nan_euclidean_distances

from densimpute.core.distance import (
    nan_euclidean,
    nan_std_euclidean,
    pairwise_nan_euclidean,
    pairwise_nan_std_euclidean,
)
from densimpute.data.dataset import DimensionError

NAN = np.nan
ROW_1 = [-1, 6, 4, NAN, 8]
ROW_2 = [NAN, NAN, 3, NAN, 4]
ROW_3 = [-1, 5, 3, -2, NAN]
SIGMA = np.full(5, 1.5)


def test_nan_euclidean_worked_rows():
    assert nan_euclidean(ROW_1, ROW_3).value == pytest.approx(np.sqrt(5 / 3 * 2), abs=1e-9)
    assert nan_euclidean(ROW_1, ROW_3).value == pytest.approx(1.826, abs=1e-3)
    assert nan_euclidean(ROW_2, ROW_3).value == 0.0
    assert nan_euclidean(ROW_2, ROW_3).n_common == 1


def test_nan_std_euclidean_worked_rows():
    assert nan_std_euclidean(ROW_1, ROW_3, SIGMA).value == pytest.approx(np.sqrt(6.5), abs=1e-9)
    assert nan_std_euclidean(ROW_1, ROW_3, SIGMA).value == pytest.approx(2.550, abs=1e-3)
    assert nan_std_euclidean(ROW_2, ROW_3, SIGMA).value == pytest.approx(3.0, abs=1e-9)


def test_identical_complete_rows_are_zero():
    row = [0.1, 0.2, 0.3]
    assert nan_euclidean(row, row).value == 0.0
    assert nan_std_euclidean(row, row, [5.0, 5.0, 5.0]).value == 0.0


def test_no_common_feature_is_infinite():
    d = nan_euclidean([1.0, NAN], [NAN, 2.0])
    assert d.value == float("inf")
    assert d.n_common == 0


def test_complete_rows_reduce_to_euclidean():
    a, b = np.array([0.1, 0.5, 0.9]), np.array([0.3, 0.2, 0.4])
    plain = float(np.linalg.norm(a - b))
    assert nan_euclidean(a, b).value == pytest.approx(plain, abs=1e-12)
    assert nan_std_euclidean(a, b, [1.0, 1.0, 1.0]).value == pytest.approx(plain, abs=1e-12)


def test_symmetry():
    assert nan_euclidean(ROW_1, ROW_3).value == nan_euclidean(ROW_3, ROW_1).value
    assert nan_std_euclidean(ROW_1, ROW_3, SIGMA).value == nan_std_euclidean(ROW_3, ROW_1, SIGMA).value


def test_extra_missing_column_increases_std_distance():
    a = [0.2, 0.4, 0.6]
    b = [0.3, 0.1, 0.5]
    sigma = [0.2, 0.3, 0.4]
    before = nan_std_euclidean(a, b, sigma).value
    after = nan_std_euclidean([0.2, 0.4, NAN], b, sigma).value
    assert after > before


def test_length_mismatch_raises():
    with pytest.raises(DimensionError):
        nan_euclidean([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        nan_std_euclidean([1.0, 2.0], [1.0, 2.0], [1.0])


def _sparse(rng, n, d, rate):
    X = rng.random((n, d))
    X[rng.random((n, d)) < rate] = NAN
    return X


def test_pairwise_matches_sklearn_oracle():
    rng = np.random.default_rng(0)
    A = _sparse(rng, 40, 5, 0.3)
    B = _sparse(rng, 30, 5, 0.3)
    ours = pairwise_nan_euclidean(A, B)
    oracle = nan_euclidean_distances(A, B)
    undefined = np.isnan(oracle)
    assert np.array_equal(np.isinf(ours), undefined)
    np.testing.assert_allclose(ours[~undefined], oracle[~undefined], atol=1e-7)


def test_pairwise_std_matches_per_pair():
    rng = np.random.default_rng(1)
    A = _sparse(rng, 12, 4, 0.25)
    B = _sparse(rng, 9, 4, 0.25)
    sigma = np.array([0.1, 0.2, 0.3, 0.4])
    ours = pairwise_nan_std_euclidean(A, B, sigma)
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            assert ours[i, j] == pytest.approx(nan_std_euclidean(A[i], B[j], sigma).value, abs=1e-7)


def test_pairwise_blocks_and_threads_agree():
    rng = np.random.default_rng(2)
    A = _sparse(rng, 103, 3, 0.2)
    B = _sparse(rng, 50, 3, 0.2)
    sigma = np.array([0.2, 0.3, 0.1])
    whole = pairwise_nan_std_euclidean(A, B, sigma)
    blocked = pairwise_nan_std_euclidean(A, B, sigma, block_size=10, threads=4)
    np.testing.assert_allclose(whole, blocked, atol=1e-12)
    assert pairwise_nan_euclidean(A, B, block_size=7, threads=3).shape == (103, 50)


def test_pairwise_column_mismatch_raises():
    with pytest.raises(DimensionError):
        pairwise_nan_euclidean(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(DimensionError):
        pairwise_nan_std_euclidean(np.zeros((2, 3)), np.zeros((2, 3)), [1.0, 1.0])
