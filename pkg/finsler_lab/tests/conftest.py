import numpy as np
import pytest

from finsler_lab.app.manifold import torus, unbounded, warped_surface
from finsler_lab.app.metric_core import euclidean, randers, riemannian
from finsler_lab.app.verification import FIXTURES_DIR, Fixtures


@pytest.fixture(scope="session")
def fixtures():
    return Fixtures(FIXTURES_DIR)


@pytest.fixture(scope="session")
def euclid():
    return euclidean(2)


@pytest.fixture(scope="session")
def randers_b05():
    return randers(np.eye(2), np.array([0.5, 0.0]), 2, name="randers-b05")


@pytest.fixture(scope="session")
def randers_b03():
    return randers(np.eye(2), np.array([0.3, 0.0]), 2, name="randers-b03")


@pytest.fixture(scope="session")
def riemannian_diag():
    return riemannian(np.diag([4.0, 1.0]), 2, name="diag-4-1")


@pytest.fixture(scope="session")
def unit_torus():
    return torus((1.0, 1.0))


@pytest.fixture(scope="session")
def plane():
    return unbounded(2)


@pytest.fixture(scope="session")
def warped():
    return warped_surface()
