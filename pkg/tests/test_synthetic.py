"""Synthetic generators and their registry."""

import numpy as np
import pytest
from pydantic import ValidationError

from densimpute.data.synthetic import (
    GENERATOR_REGISTRY,
    GeneratorSpec,
    generate,
    get_generator,
    list_generators,
    sample_gaussian_mixture,
)


def test_registry_contents():
    assert list_generators() == ["2d_linear", "2d_ring", "2d_sine", "gaussians"]
    assert get_generator("2d_ring").default_n == 500
    assert get_generator("gaussians").default_n == 10_000
    assert get_generator("nope") is None


@pytest.mark.parametrize("name", ["2d_linear", "2d_sine", "2d_ring"])
def test_two_dimensional_shapes(name):
    X = generate(GeneratorSpec(name=name, n=300, seed=7))
    assert X.values.shape == (300, 2)
    assert X.column_names == ("x1", "x2")
    assert X.n_missing == 0


def test_generation_is_deterministic():
    a = generate(GeneratorSpec(name="2d_ring", n=100, seed=7))
    b = generate(GeneratorSpec(name="2d_ring", n=100, seed=7))
    c = generate(GeneratorSpec(name="2d_ring", n=100, seed=8))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_shapes_follow_their_curves():
    linear = generate(GeneratorSpec(name="2d_linear", n=5000, seed=1)).values
    assert np.std(linear[:, 1] - linear[:, 0]) == pytest.approx(0.1, rel=0.1)

    sine = generate(GeneratorSpec(name="2d_sine", n=5000, seed=1)).values
    assert np.std(sine[:, 1] - np.sin(sine[:, 0])) == pytest.approx(0.2, rel=0.1)

    ring = generate(GeneratorSpec(name="2d_ring", n=5000, seed=1)).values
    radius = np.hypot(ring[:, 0], ring[:, 1])
    assert radius.mean() == pytest.approx(1.0, abs=0.01)
    assert radius.std() == pytest.approx(0.1, rel=0.1)


def test_gaussian_mixture_structure():
    sample = sample_gaussian_mixture(3000, np.random.default_rng(0))
    assert sample.data.values.shape == (3000, 8)
    assert sample.means.shape == (3, 8)
    assert set(np.unique(sample.labels)) == {0, 1, 2}
    for cov in sample.covariances:
        np.testing.assert_allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= 0.1 - 1e-9
    first = sample.data.values[sample.labels == 0]
    np.testing.assert_allclose(first.mean(axis=0), sample.means[0], atol=0.5)


def test_generate_default_n_and_errors():
    assert generate(GeneratorSpec(name="2d_sine", seed=0)).n_rows == 500
    with pytest.raises(KeyError):
        generate(GeneratorSpec(name="spiral", seed=0))
    with pytest.raises(ValidationError):
        GeneratorSpec(name="2d_ring", n=0)
    assert "2d_linear" in GENERATOR_REGISTRY
