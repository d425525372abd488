"""
Registry-facing imputers.

Each class adapts one method to the BaseImputer surface and declares its
hyperparameter and search grid:
- knnxkde     1/tau in [10 .. 1000]
- knn         k in [1 .. 100]
- softimpute  lambda in [0.1 .. 10]
- mice, mean, median have nothing to tune
"""

from densimpute.core import knnxkde
from densimpute.core.knnxkde import DistanceMetric, KnnXKdeConfig, PointStrategy
from densimpute.methods import baselines
from densimpute.methods.base import BaseImputer, ImputerRegistry, NormalizedFit

INV_TAU_GRID = (10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1000.0)
K_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
LAMBDA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)


class KnnXKdeImputer(BaseImputer):
    name = "knnxkde"
    description = "Softmax-weighted donors with Gaussian kernels; returns per-cell mixtures"
    hyperparameter = "inv_tau"
    default_grid = INV_TAU_GRID
    default_value = knnxkde.DEFAULT_INV_TAU
    supports_likelihood = True

    def __init__(
        self,
        h: float = knnxkde.DEFAULT_BANDWIDTH,
        n_draws: int = knnxkde.DEFAULT_N_DRAWS,
        strategy: PointStrategy = PointStrategy.MEAN,
        metric: DistanceMetric = DistanceMetric.NAN_STD_EUCLIDEAN,
        threads: int = 1,
    ):
        self.h = h
        self.n_draws = n_draws
        self.strategy = PointStrategy(strategy)
        self.metric = DistanceMetric(metric)
        self.threads = threads

    def config(self, inv_tau: float) -> KnnXKdeConfig:
        return KnnXKdeConfig.from_inverse_tau(inv_tau, h=self.h, n_draws=self.n_draws, metric=self.metric)

    def fit_normalized(self, X_norm, param, rng, keep_distributions) -> NormalizedFit:
        result = knnxkde.impute(
            X_norm,
            self.config(param),
            strategy=self.strategy,
            rng=rng,
            threads=self.threads,
            keep_distributions=keep_distributions,
        )
        return NormalizedFit(
            filled=result.imputed,
            distributions=result if keep_distributions else None,
            fallback_count=result.fallback_count,
        )


class KnnImputer(BaseImputer):
    name = "knn"
    description = "Mean of the k nearest rows observed in the target column"
    hyperparameter = "k"
    default_grid = K_GRID
    default_value = 5.0
    supports_likelihood = True

    def fit_normalized(self, X_norm, param, rng, keep_distributions) -> NormalizedFit:
        result = baselines.knn_impute(X_norm, int(param))
        return NormalizedFit(filled=result.imputed, cell_models=result.cell_models)


class MiceImputer(BaseImputer):
    name = "mice"
    description = "Chained least-squares regressions with residual noise, averaged over repeats"
    supports_likelihood = True

    def __init__(self, n_iters: int = baselines.MICE_ITERS, n_repeats: int = baselines.MICE_REPEATS):
        self.n_iters = n_iters
        self.n_repeats = n_repeats

    def fit_normalized(self, X_norm, param, rng, keep_distributions) -> NormalizedFit:
        result = baselines.mice_impute(X_norm, self.n_iters, self.n_repeats, rng)
        return NormalizedFit(filled=result.imputed, cell_models=result.cell_models)


class SoftImputeImputer(BaseImputer):
    name = "softimpute"
    description = "Low-rank completion by soft-thresholded SVD"
    hyperparameter = "lambda"
    default_grid = LAMBDA_GRID
    default_value = 1.0

    def __init__(self, max_iters: int = 100, tol: float = 1e-5):
        self.max_iters = max_iters
        self.tol = tol

    def fit_normalized(self, X_norm, param, rng, keep_distributions) -> NormalizedFit:
        result = baselines.soft_impute(X_norm, float(param), self.max_iters, self.tol)
        return NormalizedFit(filled=result.imputed)


class MeanImputer(BaseImputer):
    name = "mean"
    description = "Column mean of observed cells"
    supports_likelihood = True

    def fit_normalized(self, X_norm, param, rng, keep_distributions) -> NormalizedFit:
        result = baselines.mean_median_impute(X_norm, "mean")
        return NormalizedFit(filled=result.imputed, cell_models=result.cell_models)


class MedianImputer(BaseImputer):
    name = "median"
    description = "Column median of observed cells"

    def fit_normalized(self, X_norm, param, rng, keep_distributions) -> NormalizedFit:
        return NormalizedFit(filled=baselines.mean_median_impute(X_norm, "median").imputed)


DEFAULT_METHODS = ("knnxkde", "knn", "mice", "softimpute", "mean", "median")


def build_default_registry(
    h: float = knnxkde.DEFAULT_BANDWIDTH,
    n_draws: int = knnxkde.DEFAULT_N_DRAWS,
    strategy: PointStrategy = PointStrategy.MEAN,
    metric: DistanceMetric = DistanceMetric.NAN_STD_EUCLIDEAN,
    mice_iters: int = baselines.MICE_ITERS,
    mice_repeats: int = baselines.MICE_REPEATS,
    threads: int = 1,
) -> ImputerRegistry:
    registry = ImputerRegistry()
    registry.register(KnnXKdeImputer(h=h, n_draws=n_draws, strategy=strategy, metric=metric, threads=threads))
    registry.register(KnnImputer())
    registry.register(MiceImputer(n_iters=mice_iters, n_repeats=mice_repeats))
    registry.register(SoftImputeImputer())
    registry.register(MeanImputer())
    registry.register(MedianImputer())
    return registry
