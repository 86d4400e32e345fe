import numpy as np
import pytest

from mvlangevin import build_constants, linear1d
from mvlangevin.model import ModelParams


def saturating(x):
    x = np.asarray(x, dtype=float)
    return -x / (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))


@pytest.fixture(scope="session")
def benchmark():
    return linear1d(0.04)


@pytest.fixture(scope="session")
def benchmark_constants(benchmark):
    return build_constants(benchmark)


@pytest.fixture(scope="session")
def dissipative_model():
    """1-d model with a positive dissipativity radius (R = 1)."""
    return ModelParams(gamma=3.0, k_matrix=[[2.0]], g=saturating,
                       l_g=1.0, l_int=0.0, r_dissip=1.0)


@pytest.fixture(scope="session")
def dissipative_constants(dissipative_model):
    return build_constants(dissipative_model)
