import warnings

import pytest

from sobexlab.geometry import build_mushroom
from sobexlab.quadrature import QuadratureSpec


@pytest.fixture(scope="session")
def spec():
    """The reference mushroom (n, p, q, m) = (3, 5, 1, 12)."""
    return build_mushroom(3, 5.0, 1.0, 12)


@pytest.fixture(scope="session")
def small_spec():
    return build_mushroom(3, 5.0, 1.0, 3)


@pytest.fixture(scope="session")
def spec4d():
    return build_mushroom(4, 8.0, 1.0, 3)


@pytest.fixture(scope="session")
def weak_spec():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_mushroom(3, 1.5, 1.0, 6)


@pytest.fixture(scope="session")
def quad():
    return QuadratureSpec()
