import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from mobsis.model import ModelParams, fig1_params

settings.register_profile("default", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("default")


def random_params(rng: np.random.Generator, K: int | None = None, epsilon=0.02, T=5.0) -> ModelParams:
    """Draw parameters satisfying mu_k > m_k gamma_k for k >= 1."""
    K = int(rng.integers(1, 5)) if K is None else K
    w = rng.uniform(0.2, 1.0, K + 1)
    m = w / w.sum()
    gamma = rng.uniform(0.1, 5.0, K + 1)
    mu = m * gamma * rng.uniform(1.05, 4.0, K + 1)
    mu[0] = rng.uniform(0.1, 5.0)
    nu = rng.uniform(0.0, 20.0, K)
    return ModelParams(m, gamma, nu, mu, epsilon, T)


@st.composite
def valid_params(draw, K=None):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_params(np.random.default_rng(seed), K)


@pytest.fixture
def fig1():
    return fig1_params()
