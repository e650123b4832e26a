import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from afdm_isac.channel import default_scene, desk_scene, validation_scene

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def full_scene():
    return default_scene()


@pytest.fixture(scope="session")
def small_scene():
    return desk_scene()


@pytest.fixture(scope="session")
def fd_scene():
    return validation_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
