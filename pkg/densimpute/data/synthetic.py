"""
Synthetic benchmark datasets.

Generators register themselves by name in GENERATOR_REGISTRY, the same way
benchmark configs and the CLI look them up.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from densimpute.data.dataset import DataMatrix

SMOOTHING_STD = 0.05
LINEAR_NOISE_STD = 0.1
SINE_NOISE_STD = 0.2
RING_NOISE_STD = 0.1

MIXTURE_COMPONENTS = 3
MIXTURE_DIM = 8
MIXTURE_FACTORS = 4
MIXTURE_MEAN_VARIANCE = 4.0
MIXTURE_NOISE_FLOOR = 0.1

GeneratorFn = Callable[[int, np.random.Generator], DataMatrix]


@dataclass
class DatasetGenerator:
    name: str
    description: str
    fn: GeneratorFn
    default_n: int = 500


GENERATOR_REGISTRY: dict[str, DatasetGenerator] = {}


def register_generator(generator: DatasetGenerator) -> None:
    GENERATOR_REGISTRY[generator.name] = generator


def get_generator(name: str) -> DatasetGenerator | None:
    return GENERATOR_REGISTRY.get(name)


def list_generators() -> list[str]:
    return sorted(GENERATOR_REGISTRY)


class GeneratorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    n: int | None = Field(default=None, ge=1)
    seed: int | None = None


def generate(spec: GeneratorSpec, rng: np.random.Generator | None = None) -> DataMatrix:
    generator = get_generator(spec.name)
    if generator is None:
        raise KeyError(f"Unknown generator {spec.name!r}; valid: {', '.join(list_generators())}")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    return generator.fn(spec.n or generator.default_n, rng)


# ── Two-dimensional shapes ────────────────────────────────────────────────

def _smoothed_uniform(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform[0, 1] blurred with Gaussian noise so densities do not drop to zero at the edges."""
    return rng.uniform(0.0, 1.0, n) + rng.normal(0.0, SMOOTHING_STD, n)


def gen_2d_linear(n: int, rng: np.random.Generator) -> DataMatrix:
    x1 = _smoothed_uniform(n, rng)
    x2 = x1 + rng.normal(0.0, LINEAR_NOISE_STD, n)
    return DataMatrix(np.column_stack([x1, x2]), ("x1", "x2"))


def gen_2d_sine(n: int, rng: np.random.Generator) -> DataMatrix:
    x1 = 4.0 * np.pi * _smoothed_uniform(n, rng)
    x2 = np.sin(x1) + rng.normal(0.0, SINE_NOISE_STD, n)
    return DataMatrix(np.column_stack([x1, x2]), ("x1", "x2"))


def gen_2d_ring(n: int, rng: np.random.Generator) -> DataMatrix:
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    r = 1.0 + rng.normal(0.0, RING_NOISE_STD, n)
    return DataMatrix(np.column_stack([r * np.cos(theta), r * np.sin(theta)]), ("x1", "x2"))


# ── Factor-model Gaussian mixture ─────────────────────────────────────────

@dataclass
class GaussianMixtureSample:
    data: DataMatrix
    labels: np.ndarray
    means: np.ndarray        # components x dim
    covariances: np.ndarray  # components x dim x dim


def sample_gaussian_mixture(n: int, rng: np.random.Generator) -> GaussianMixtureSample:
    """Equal-weight mixture; each covariance is W W^T + noise floor with W of rank MIXTURE_FACTORS."""
    means = rng.normal(0.0, np.sqrt(MIXTURE_MEAN_VARIANCE), size=(MIXTURE_COMPONENTS, MIXTURE_DIM))
    covariances = np.empty((MIXTURE_COMPONENTS, MIXTURE_DIM, MIXTURE_DIM))
    for c in range(MIXTURE_COMPONENTS):
        W = rng.standard_normal((MIXTURE_DIM, MIXTURE_FACTORS))
        covariances[c] = W @ W.T + MIXTURE_NOISE_FLOOR * np.eye(MIXTURE_DIM)

    labels = rng.integers(0, MIXTURE_COMPONENTS, size=n)
    values = np.empty((n, MIXTURE_DIM))
    for c in range(MIXTURE_COMPONENTS):
        rows = labels == c
        values[rows] = rng.multivariate_normal(means[c], covariances[c], size=int(rows.sum()))

    names = tuple(f"x{k + 1}" for k in range(MIXTURE_DIM))
    return GaussianMixtureSample(
        data=DataMatrix(values, names), labels=labels, means=means, covariances=covariances
    )


def gen_gaussians(n: int, rng: np.random.Generator) -> DataMatrix:
    return sample_gaussian_mixture(n, rng).data


register_generator(DatasetGenerator("2d_linear", "x2 = x1 + noise, x1 smoothed uniform", gen_2d_linear))
register_generator(DatasetGenerator("2d_sine", "x2 = sin(x1) + noise over two periods", gen_2d_sine))
register_generator(DatasetGenerator("2d_ring", "noisy unit circle", gen_2d_ring))
register_generator(DatasetGenerator(
    "gaussians", "3-component factor-model Gaussian mixture in 8 dimensions", gen_gaussians, default_n=10_000
))
