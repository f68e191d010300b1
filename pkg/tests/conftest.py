import numpy as np
import pytest

from risjsdm.pipeline import prepare_deployment
from risjsdm.scenario import default_scenario


@pytest.fixture(scope="session")
def scenario():
    return default_scenario().with_(n_trials=20)


@pytest.fixture(scope="session")
def deployment(scenario):
    return prepare_deployment(scenario)


@pytest.fixture
def rng():
    from risjsdm.numerics import SeededRng

    return SeededRng(12345)


def crandn(gen, *shape):
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)
