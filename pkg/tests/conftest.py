import pytest
from hypothesis import HealthCheck, settings

from markets import flat_snapshot, sample_snapshot

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def sample():
    return sample_snapshot()


@pytest.fixture(scope="session")
def flat():
    return flat_snapshot()
