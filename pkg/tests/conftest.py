import pytest
from hypothesis import HealthCheck, settings

from bubbletower.discrete_ops import RadialGrid

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def log_grid():
    return RadialGrid.log()


@pytest.fixture(scope="session")
def wide_grid():
    return RadialGrid.log_span(1e-8, 1e8, 128)
