import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("orlab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("orlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_eps_datasets():
    """Small eps-greedy datasets on the 6x6 grid, shared across modules."""
    from orlab.data import make_eps_greedy_dataset
    return {eps: make_eps_greedy_dataset(eps=eps, n_episodes=40, seed=3) for eps in (0.0, 0.8, 1.0)}
