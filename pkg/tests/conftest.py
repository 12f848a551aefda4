"""Shared fixtures and property-test configuration."""

import pytest
from hypothesis import HealthCheck, settings

from burstmap.kickmap import build_kick_map
from burstmap.model import preset

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def geom_b0():
    return preset("b0")


@pytest.fixture(scope="session")
def geom_b05():
    return preset("b05")


@pytest.fixture(scope="session")
def km_half(geom_b0):
    """Sub-threshold kick map with delayed, reset, and hold branches."""
    return build_kick_map(geom_b0, 0.5)


@pytest.fixture(scope="session")
def km_strong(geom_b0):
    """Supra-threshold kick map with reset and hold branches only."""
    return build_kick_map(geom_b0, 1.5)


@pytest.fixture(scope="session")
def km_weak(geom_b0):
    """Sub-threshold kick map with a wide delayed branch."""
    return build_kick_map(geom_b0, 0.1)


@pytest.fixture(scope="session")
def km_zero(geom_b0):
    """Zero-amplitude kick map (the identity)."""
    return build_kick_map(geom_b0, 0.0)
