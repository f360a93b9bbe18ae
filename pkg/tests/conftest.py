"""
Pytest configuration and fixtures for the MHD Rayleigh-Taylor solver tests.
"""

import math

import pytest

from mhd_rt_stability.chebgrid import build
from mhd_rt_stability.model import FluidParams, MagneticField


@pytest.fixture
def canonical_params():
    """Heavy fluid on top, unit viscosities, gravity and depths."""
    return FluidParams(
        rho_plus=2.0, rho_minus=1.0, mu_plus=1.0, mu_minus=1.0, g=1.0, ell=1.0, m=1.0
    )


@pytest.fixture
def inviscid_params():
    """Canonical configuration without viscosity."""
    return FluidParams(2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, validate=False)


@pytest.fixture
def critical_value():
    """M_c of the canonical configuration."""
    return math.sqrt(0.5)


@pytest.fixture
def subcritical_field():
    return MagneticField((0.0, 0.0, 0.3))


@pytest.fixture
def supercritical_field(critical_value):
    return MagneticField((0.0, 0.0, 1.2 * critical_value))


@pytest.fixture
def horizontal_field():
    return MagneticField((1.0, 0.0, 0.0))


@pytest.fixture
def tilted_field():
    return MagneticField((1.0, 0.0, 0.5))


@pytest.fixture(scope="session")
def small_grid():
    return build(16, 16)


@pytest.fixture(scope="session")
def medium_grid():
    return build(24, 24)


@pytest.fixture(scope="session")
def fine_grid():
    return build(48, 48)
