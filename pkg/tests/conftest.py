import dataclasses

import numpy as np
import pytest

from tworay_pm.array_model import uniform_layout
from tworay_pm.closed_form import design_fixed_array
from tworay_pm.geometry import ScenarioGeometry, ring_angles_for_step
from tworay_pm.targets import qpsk_spec


@pytest.fixture
def reference_geometry():
    """H = 500, D1 = D = 1000, ring radius 8.4 sampled every degree"""
    return ScenarioGeometry()


@pytest.fixture
def coarse_geometry():
    """Same scenario with the ring sampled every 30 degrees"""
    return dataclasses.replace(ScenarioGeometry(), ring_angles_deg=ring_angles_for_step(30.0))


@pytest.fixture
def qpsk():
    return qpsk_spec(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def reference_ula_design():
    return design_fixed_array(uniform_layout(30, 0.5), ScenarioGeometry(), qpsk_spec(seed=0))


@pytest.fixture
def random_complex(rng):
    """Draws complex Gaussian arrays of a given shape"""
    def draw(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return draw
