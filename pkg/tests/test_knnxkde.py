"""kNN x KDE: patterns, weights, mixture densities, sampling and imputation."""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate

from densimpute.core import knnxkde
from densimpute.core.knnxkde import (
    MODE_GRID,
    CellDistribution,
    DistanceMetric,
    EmptyDonorsError,
    KnnXKdeConfig,
    PointStrategy,
    RowDistribution,
    count_modes,
    donor_weights,
    enumerate_patterns,
    histogram_modes,
    joint_density,
    marginal_density,
    marginal_logpdf,
    point_estimate,
    sample_cell,
    sample_imputations,
    sample_row,
    samples_to_frame,
    softmax_weights,
)
from densimpute.data.dataset import AllMissingError, DataMatrix, DimensionError, normalize
from densimpute.data.missingness import ampute_full_mcar, apply_mask
from densimpute.data.synthetic import gen_2d_linear, gen_2d_sine

NAN = np.nan


def _cell(values, weights, h=0.03):
    return CellDistribution(
        row=0, col=0, donor_values=np.asarray(values, float), weights=np.asarray(weights, float), bandwidth=h
    )


def _amputed_linear(seed=3, n=200, rate=0.2):
    X = gen_2d_linear(n, np.random.default_rng(seed))
    return X, apply_mask(X, ampute_full_mcar(X, rate, np.random.default_rng(seed + 1)))


# ── Config and patterns ───────────────────────────────────────────────────

def test_config_defaults_and_inverse_tau():
    config = KnnXKdeConfig()
    assert config.h == 0.03
    assert config.inverse_tau == pytest.approx(50.0)
    assert config.n_draws == 10_000
    assert KnnXKdeConfig.from_inverse_tau(200.0).tau == pytest.approx(0.005)
    with pytest.raises(ValidationError):
        KnnXKdeConfig(tau=0.0)
    with pytest.raises(ValidationError):
        KnnXKdeConfig(h=-1.0)
    with pytest.raises(ValueError):
        KnnXKdeConfig.from_inverse_tau(0.0)


def test_enumerate_patterns_groups_and_donors():
    X = np.array([
        [1.0, NAN, 3.0],
        [NAN, 2.0, 3.0],
        [1.0, NAN, 5.0],
        [1.0, 2.0, 3.0],
        [NAN, NAN, 1.0],
    ])
    groups = {g.key: g for g in enumerate_patterns(~np.isnan(X))}
    assert set(groups) == {(0,), (1,), (0, 1)}
    assert groups[(1,)].imputee_rows.tolist() == [0, 2]
    assert groups[(1,)].donor_rows.tolist() == [1, 3]
    assert groups[(0, 1)].donor_rows.tolist() == [3]
    for g in groups.values():
        assert not set(g.imputee_rows) & set(g.donor_rows)


def test_enumerate_patterns_complete_and_empty_rows():
    assert enumerate_patterns(np.ones((4, 3), dtype=bool)) == []
    mask = np.ones((3, 2), dtype=bool)
    mask[1] = False
    with pytest.raises(AllMissingError):
        enumerate_patterns(mask)


# ── Weights ───────────────────────────────────────────────────────────────

def test_softmax_weights_normalized_and_ordered():
    w = softmax_weights([0.1, 0.2, 0.5, np.inf], tau=0.02)
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    assert w[0] > w[1] > w[2] > 0.0
    assert w[3] == 0.0


def test_softmax_weights_extreme_temperature_does_not_overflow():
    w = softmax_weights([10.0, 10.001, 50.0], tau=1e-6)
    assert np.isfinite(w).all()
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    assert w[0] == pytest.approx(1.0)


def test_softmax_weights_all_infinite_raises():
    with pytest.raises(EmptyDonorsError):
        softmax_weights([np.inf, np.inf], tau=0.1)


def test_max_weight_non_decreasing_in_inverse_tau():
    distances = np.random.default_rng(11).uniform(0.0, 1.0, size=40)
    inverse_taus = [1.0, 10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1000.0]
    max_weights = np.array([softmax_weights(distances, tau=1.0 / inv).max() for inv in inverse_taus])
    assert (np.diff(max_weights) >= -1e-12).all()
    assert max_weights[-1] > max_weights[0]


def test_donor_weights_prefers_nearer_donor():
    sigma = np.array([0.3, 0.3])
    donors = np.array([[0.1, 0.2], [0.8, 0.9]])
    w = donor_weights([NAN, 0.25], donors, sigma, tau=0.05)
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    assert w[0] > w[1]
    with pytest.raises(EmptyDonorsError):
        donor_weights([NAN, 0.25], np.empty((0, 2)), sigma, tau=0.05)


# ── Densities ─────────────────────────────────────────────────────────────

def test_cell_distribution_validates_weights():
    with pytest.raises(ValueError):
        _cell([0.1, 0.2], [0.7, 0.7])
    with pytest.raises(DimensionError):
        _cell([0.1, 0.2, 0.3], [0.5, 0.5])


def test_marginal_density_integrates_to_one():
    dist = _cell([0.2, 0.5, 0.9], [0.2, 0.3, 0.5])
    total, _ = integrate.quad(lambda x: marginal_density(dist, x), -1.0, 2.0, points=[0.2, 0.5, 0.9], limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_marginal_logpdf_matches_density():
    dist = _cell([0.2, 0.5, 0.9], [0.2, 0.3, 0.5])
    xs = np.array([0.0, 0.21, 0.6, 1.3])
    np.testing.assert_allclose(np.exp(marginal_logpdf(dist, xs)), marginal_density(dist, xs), rtol=1e-10)
    # far tails stay finite in log space
    assert np.isfinite(marginal_logpdf(dist, 10.0))


def test_joint_density_marginalizes_to_cell_density():
    rd = RowDistribution(
        row=0,
        missing_columns=(0, 1),
        donor_matrix=np.array([[0.2, 0.4], [0.6, 0.1], [0.8, 0.9]]),
        weights=np.array([0.3, 0.5, 0.2]),
        bandwidth=0.05,
    )
    x = 0.6
    integral, _ = integrate.quad(lambda y: joint_density(rd, [x, y]), -1.0, 2.0, points=[0.1, 0.4, 0.9], limit=200)
    assert integral == pytest.approx(marginal_density(rd.cell(0), x), rel=1e-4)
    with pytest.raises(DimensionError):
        joint_density(rd, [0.1, 0.2, 0.3])


# ── Sampling and point estimates ──────────────────────────────────────────

def test_sample_mean_converges_to_analytic_mean():
    dist = _cell([0.1, 0.4, 0.95], [0.5, 0.2, 0.3], h=0.05)
    n = 100_000
    draws = sample_cell(dist, n, np.random.default_rng(0))
    mean = point_estimate(dist, PointStrategy.MEAN)
    var = float(dist.weights @ (dist.donor_values ** 2 + 0.05 ** 2)) - mean ** 2
    assert abs(draws.mean() - mean) < 4 * np.sqrt(var / n)


def test_sample_row_shares_donor_across_columns():
    rd = RowDistribution(
        row=0,
        missing_columns=(0, 1),
        donor_matrix=np.array([[0.0, 0.0], [1.0, 1.0]]),
        weights=np.array([0.5, 0.5]),
        bandwidth=0.01,
    )
    draws = sample_row(rd, 2000, np.random.default_rng(1))
    assert draws.shape == (2000, 2)
    # both columns come from the same donor, so they never split across clusters
    assert np.all(np.abs(draws[:, 0] - draws[:, 1]) < 0.2)


def test_point_estimates():
    assert point_estimate(_cell([0.2, 0.6], [0.25, 0.75]), "mean") == pytest.approx(0.5)
    assert point_estimate(_cell([0.4, 0.6], [0.5, 0.5], h=0.1), "median") == pytest.approx(0.5, abs=1e-9)
    assert point_estimate(_cell([0.3, 0.7], [0.9, 0.1]), "mode") == pytest.approx(0.3, abs=1e-3)
    draw = point_estimate(_cell([0.3, 0.7], [0.5, 0.5]), "sample", rng=np.random.default_rng(0))
    assert -0.5 < draw < 1.5
    with pytest.raises(ValueError):
        point_estimate(_cell([0.3, 0.7], [0.5, 0.5]), "sample")


def test_count_modes():
    assert count_modes([0, 1, 0, 0, 1, 0]) == 2
    assert count_modes([5, 4, 3]) == 1
    assert count_modes([0, 0, 0]) == 0
    # a bump below the prominence threshold is ignored
    assert count_modes([0, 10, 0, 0.5, 0]) == 1


def test_sample_imputations_shapes():
    _, Xa = _amputed_linear()
    Xn, _ = normalize(Xa)
    config = KnnXKdeConfig(n_draws=50)
    group = enumerate_patterns(Xn.mask)[0]
    draws = sample_imputations(group, Xn, config, np.random.default_rng(0))
    assert len(draws) == group.imputee_rows.size
    assert all(d.shape == (50, group.missing_columns.size) for d in draws)


# ── Imputation ────────────────────────────────────────────────────────────

def test_impute_fills_and_preserves_observed():
    X, Xa = _amputed_linear()
    result = knnxkde.impute(Xa, rng=0)
    assert result.imputed.n_missing == 0
    observed = Xa.mask
    np.testing.assert_array_equal(result.imputed.values[observed], Xa.values[observed])
    assert result.fallback_count == 0
    rows = {rd.row for rd in result.row_distributions}
    assert rows == set(np.flatnonzero(Xa.missing_mask.any(axis=1)).tolist())
    for rd in result.row_distributions:
        assert rd.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_impute_mean_is_weighted_donor_mean():
    _, Xa = _amputed_linear()
    result = knnxkde.impute(Xa, rng=0)
    params = result.normalization
    for cell in list(result.cell_distributions())[:20]:
        expected = (cell.weights @ cell.donor_values) * params.span[cell.col] + params.mins[cell.col]
        assert result.imputed.values[cell.row, cell.col] == pytest.approx(expected, abs=1e-9)


def test_impute_without_missing_returns_input():
    X = gen_2d_linear(30, np.random.default_rng(0))
    result = knnxkde.impute(X)
    assert result.imputed is X
    assert result.row_distributions == []


def test_impute_deterministic_and_thread_independent():
    _, Xa = _amputed_linear(n=150, rate=0.3)
    a = knnxkde.impute(Xa, strategy="sample", rng=5, threads=1)
    b = knnxkde.impute(Xa, strategy="sample", rng=5, threads=4)
    c = knnxkde.impute(Xa, strategy="sample", rng=6, threads=1)
    np.testing.assert_array_equal(a.imputed.values, b.imputed.values)
    assert not np.array_equal(a.imputed.values, c.imputed.values)


def _unreachable_table():
    return DataMatrix.from_array([
        [NAN, NAN, 1.0],
        [1.0, 2.0, NAN],
        [2.0, 3.0, NAN],
        [3.0, NAN, 5.0],
    ])


def test_plain_metric_falls_back_to_column_marginal():
    X = _unreachable_table()
    config = KnnXKdeConfig(metric=DistanceMetric.NAN_EUCLIDEAN)
    result = knnxkde.impute(X, config)
    assert result.fallback_count == 2
    assert set(result.fallback_cells) == {(0, 0), (0, 1)}
    assert result.row_distribution(0) is None
    assert result.distribution_for(0, 0).fallback
    # column means of the observed cells
    assert result.imputed.values[0, 0] == pytest.approx(2.0)
    assert result.imputed.values[0, 1] == pytest.approx(2.5)
    assert result.imputed.n_missing == 0


def test_std_metric_reaches_every_donor():
    result = knnxkde.impute(_unreachable_table())
    assert result.fallback_count == 0
    assert result.row_distribution(0) is not None


def test_fallback_counted_without_keeping_distributions():
    config = KnnXKdeConfig(metric=DistanceMetric.NAN_EUCLIDEAN)
    result = knnxkde.impute(_unreachable_table(), config, keep_distributions=False)
    assert result.fallback_count == 2
    assert result.fallback_cells == {}
    assert result.row_distributions == []


def test_all_missing_row_rejected():
    X = DataMatrix.from_array([[1.0, 2.0], [NAN, NAN], [3.0, 4.0]])
    with pytest.raises(AllMissingError):
        knnxkde.impute(X)


# ── Exports ───────────────────────────────────────────────────────────────

def test_distributions_json_and_samples_frame():
    _, Xa = _amputed_linear(n=80)
    result = knnxkde.impute(Xa, rng=0)
    payload = knnxkde.distributions_to_json(result, Xa.column_names)
    assert len(payload["cells"]) == Xa.n_missing
    assert payload["inverse_tau"] == pytest.approx(50.0)
    for cell in payload["cells"]:
        assert sum(cell["weights"]) == pytest.approx(1.0, abs=1e-9)
        assert cell["column"] in Xa.column_names

    frame = samples_to_frame(result, 25, np.random.default_rng(0))
    assert list(frame.columns) == ["row", "draw", "x1", "x2"]
    assert len(frame) == 25 * len(result.row_distributions)
    for rd in result.row_distributions[:5]:
        rows = frame[frame["row"] == rd.row]
        for k in range(Xa.n_cols):
            assert rows[Xa.column_names[k]].isna().all() == (k not in rd.missing_columns)


def test_sine_trough_is_multimodal():
    X = gen_2d_sine(500, np.random.default_rng(0))
    target = int(np.argmin(np.abs(X.values[:, 1] + 0.88)))
    values = X.values.copy()
    values[target, 0] = NAN
    result = knnxkde.impute(X.with_values(values), rng=0)
    rd = result.row_distribution(target)
    draws = sample_row(rd, 10_000, np.random.default_rng(1))[:, 0]
    assert histogram_modes(draws) >= 2
    assert count_modes(marginal_density(rd.cell(0), MODE_GRID)) >= 2
