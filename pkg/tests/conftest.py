import numpy as np
import pytest

from betarob import ModelSpec, sample_beta


def make_dataset(n=50, seed=7, beta=(-1.0, -2.0), phi=60.0):
    """Well-behaved logit/log dataset used across the test modules."""
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.uniform(size=n)])
    z = np.ones((n, 1))
    model = ModelSpec(x, z)
    mu = 1.0 / (1.0 + np.exp(-(x @ np.asarray(beta))))
    y = sample_beta(mu, np.full(n, float(phi)), rng)
    return model, y


def make_dataset_p4(n=25, seed=11):
    """Dataset with covariates in both submodels (p = 4)."""
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.uniform(size=n)])
    z = np.column_stack([np.ones(n), rng.uniform(size=n)])
    model = ModelSpec(x, z)
    mu = 1.0 / (1.0 + np.exp(-(x @ np.array([-0.5, 1.2]))))
    phi = np.exp(z @ np.array([3.0, 0.8]))
    y = sample_beta(mu, phi, rng)
    return model, y


@pytest.fixture
def dataset():
    return make_dataset()


@pytest.fixture
def dataset_p4():
    return make_dataset_p4()
