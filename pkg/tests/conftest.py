"""Common test fixtures and configuration."""
import logging
import os

import numpy as np
import pytest

import settings
from src.models import registry


def pytest_configure(config):
    """Configure test environment."""
    os.environ.setdefault("ADVI_THREADS", "1")
    logging.basicConfig(
        level=logging.INFO,
        format='[%(levelname)s] {%(asctime)s} [%(name)s:%(funcName)s] - %(message)s'
    )


@pytest.fixture(scope="session")
def test_settings():
    """Get test settings."""
    return settings


@pytest.fixture
def rng() -> np.random.Generator:
    """A fixed-seed generator per test."""
    return np.random.default_rng(20240601)


def bind(name: str, data=None, **options):
    """Build a registered model and validate ``data`` against it."""
    model = registry.build(name, **options)
    handle = model.validate(data if data is not None else {f.name: [] for f in model.data_schema})
    return model, handle


def simulated(name: str, seed: int = 0, model_options=None, **sim_options):
    """Model plus a validated simulated dataset."""
    model = registry.build(name, **(model_options or {}))
    raw = model.simulate_data(np.random.default_rng(seed), **sim_options)
    return model, model.validate(raw)


@pytest.fixture
def weibull_poisson():
    """Weibull-Poisson model with three counts."""
    return bind("weibull_poisson", {"x": [0, 1, 2]})


@pytest.fixture
def standard_normal():
    """1-D standard normal target."""
    return bind("gaussian_target")


@pytest.fixture
def correlated_gaussian():
    """Conjugate 2-D Gaussian with correlated likelihood and 1000 simulated points."""
    return simulated("mvn_conjugate", seed=7, n=1000, mean=[1.0, -0.5])


def pytest_collection_modifyitems(items):
    """Add custom markers to test items."""
    for item in items:
        if "test_cli" in item.nodeid:
            item.add_marker(pytest.mark.integration)
