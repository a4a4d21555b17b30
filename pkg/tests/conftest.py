import pytest
from hypothesis import HealthCheck, settings

from endolab.maps import build_A, build_destroyer, construction
from endolab.params import MapParams

settings.register_profile("endolab", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("endolab")


@pytest.fixture(scope="session")
def params():
    return MapParams()


@pytest.fixture(scope="session")
def con(params):
    return construction(params)


@pytest.fixture(scope="session")
def A():
    return build_A()


@pytest.fixture(scope="session")
def destroyers(params):
    return {eta: build_destroyer(params, eta) for eta in (4e-4, 2e-4, 1e-4)}
