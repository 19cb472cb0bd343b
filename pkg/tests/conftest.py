import warnings

import numpy as np
import pytest

from wobkit import geometry as geo

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session")
def circle512():
    return geo.circle_boundary(512)


@pytest.fixture(scope="session")
def circle_half():
    return geo.circle_boundary(512, radius=0.5)


@pytest.fixture(scope="session")
def star512():
    return geo.star_boundary(5, 1.0, 0.4, 512)


@pytest.fixture(scope="session")
def square128():
    return geo.square_boundary(128, 1.0)


@pytest.fixture(scope="session")
def icosphere():
    return geo.icosphere_boundary(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def assert_within_3sigma(mean, ref, var, n, context=""):
    se = np.sqrt(np.asarray(var) / n)
    se = np.maximum(se, 1e-300)
    z = (np.asarray(mean) - np.asarray(ref)) / se
    assert np.all(np.abs(z) < 3.0), f"{context}: |z| = {np.abs(z).max():.2f} >= 3"
