"""
Imputer base class and registry.
Every method the CLI and the benchmark can run follows this interface.
"""

import abc
import time
from dataclasses import dataclass, field

import numpy as np
import structlog

from densimpute.core.knnxkde import KnnXKdeResult
from densimpute.data.dataset import DataMatrix, NormalizationParams, denormalize, normalize
from densimpute.methods.baselines import GaussianCellModel

log = structlog.get_logger()

UNSUPPORTED_METHODS = {
    "gain": "adversarial network imputer, not implemented (see docs/ARCHITECTURE.md)",
    "missforest": "random-forest iterative imputer, not implemented (see docs/ARCHITECTURE.md)",
}


class MethodNotImplementedError(NotImplementedError):
    """Method name is known but deliberately out of scope."""


class UnknownMethodError(KeyError):
    """No imputer is registered under the requested name."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else super().__str__()


@dataclass
class NormalizedFit:
    """What a method produces on a normalized matrix."""
    filled: DataMatrix
    cell_models: dict[tuple[int, int], GaussianCellModel] = field(default_factory=dict)
    distributions: KnnXKdeResult | None = None
    fallback_count: int = 0


@dataclass
class ImputationResult:
    """Structured result from any imputer run.

    `imputed` is in the input's units; cell models and distributions are in
    the normalized coordinates given by `normalization`.
    """
    method: str
    success: bool
    imputed: DataMatrix | None = None
    normalized: DataMatrix | None = None
    param: float | None = None
    cell_models: dict[tuple[int, int], GaussianCellModel] = field(default_factory=dict)
    distributions: KnnXKdeResult | None = None
    normalization: NormalizationParams | None = None
    fallback_count: int = 0
    error: str | None = None
    duration_seconds: float = 0.0


class BaseImputer(abc.ABC):
    """Abstract base. All imputers implement this interface."""

    name: str = ""
    description: str = ""
    hyperparameter: str | None = None
    default_grid: tuple[float, ...] = ()
    default_value: float | None = None
    supports_likelihood: bool = False

    @abc.abstractmethod
    def fit_normalized(
        self,
        X_norm: DataMatrix,
        param: float | None,
        rng: np.random.Generator,
        keep_distributions: bool,
    ) -> NormalizedFit:
        ...

    def impute(
        self,
        X: DataMatrix,
        param: float | None = None,
        rng: np.random.Generator | int | None = None,
        keep_distributions: bool = False,
    ) -> ImputationResult:
        """Normalize, run the method, denormalize. Failures come back as success=False."""
        param = self.default_value if param is None else param
        start = time.perf_counter()
        try:
            X_norm, params = normalize(X)
            fit = self.fit_normalized(X_norm, param, np.random.default_rng(rng), keep_distributions)
            raw = denormalize(fit.filled, params).values
            missing = X.missing_mask
            out = X.values.copy()
            out[missing] = raw[missing]
            return ImputationResult(
                method=self.name,
                success=True,
                imputed=X.with_values(out),
                normalized=fit.filled,
                param=param,
                cell_models=fit.cell_models,
                distributions=fit.distributions,
                normalization=params,
                fallback_count=fit.fallback_count,
                duration_seconds=time.perf_counter() - start,
            )
        except Exception as e:
            log.error("imputer_failed", method=self.name, param=param, error=str(e))
            return ImputationResult(
                method=self.name,
                success=False,
                param=param,
                error=f"{type(e).__name__}: {e}",
                duration_seconds=time.perf_counter() - start,
            )

    def grid(self) -> tuple[float | None, ...]:
        return self.default_grid if self.hyperparameter else (None,)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "hyperparameter": self.hyperparameter,
            "default_grid": list(self.default_grid),
            "default_value": self.default_value,
            "supports_likelihood": self.supports_likelihood,
        }


class ImputerRegistry:
    """Central registry for all available imputers."""

    def __init__(self):
        self._imputers: dict[str, BaseImputer] = {}

    def register(self, imputer: BaseImputer) -> "ImputerRegistry":
        self._imputers[imputer.name] = imputer
        log.debug("imputer_registered", name=imputer.name)
        return self

    def get(self, name: str) -> BaseImputer | None:
        return self._imputers.get(name)

    def require(self, name: str) -> BaseImputer:
        key = name.lower()
        if key in UNSUPPORTED_METHODS:
            raise MethodNotImplementedError(f"{name}: {UNSUPPORTED_METHODS[key]}")
        imputer = self._imputers.get(key)
        if imputer is None:
            raise UnknownMethodError(f"Unknown method {name!r}; valid: {', '.join(self.names())}")
        return imputer

    def all_imputers(self) -> list[BaseImputer]:
        return list(self._imputers.values())

    def names(self) -> list[str]:
        return list(self._imputers)

    def __contains__(self, name: str) -> bool:
        return name in self._imputers
