"""Shared fixtures for weyl-gauge tests.

Every test runs against the built-in numerical settings, whatever the
developer's ~/.config/weyl-gauge/settings.ini says.
"""

import math

import numpy as np
import pytest

from weylgauge import constants
from weylgauge.artifacts import ArtifactWriter
from weylgauge.metric_catalog import flat, hyperbolic_half_plane, ring_warp, sphere


@pytest.fixture(autouse=True)
def default_settings(tmp_path_factory):
    absent = tmp_path_factory.getbasetemp() / "no-settings.ini"
    constants.load_settings(str(absent))
    yield
    constants.load_settings(str(absent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def plane():
    return flat(2)


@pytest.fixture
def sphere2():
    """Round sphere of radius 2, so R = 1/2."""
    return sphere(2.0)


@pytest.fixture
def half_plane():
    return hyperbolic_half_plane()


@pytest.fixture
def warped_ring():
    return ring_warp(0.1)


@pytest.fixture
def writer(tmp_path):
    return ArtifactWriter(str(tmp_path / "out"))


@pytest.fixture
def sphere_points(rng):
    """Points away from the coordinate poles."""
    theta = rng.uniform(0.3, math.pi - 0.3, 20)
    phi = rng.uniform(0.0, 2.0 * math.pi, 20)
    return np.stack([theta, phi], axis=-1)
