import numpy as np
import pytest

from kinchannel.collision import CollisionOperator
from kinchannel.velocity import VelocityGrid

CACHE = "tests/_cache"


@pytest.fixture(scope="session")
def grid():
    return VelocityGrid(order=16)


@pytest.fixture(scope="session")
def grid24():
    return VelocityGrid(order=24)


@pytest.fixture(scope="session")
def op_test():
    """Fast degree-4 hard-sphere operator for structural tests."""
    return CollisionOperator.assemble(degree=4, quality="test", cache_dir=CACHE)


@pytest.fixture(scope="session")
def op_default():
    """Default-resolution degree-5 operator (used by acceptance checks)."""
    return CollisionOperator.assemble(degree=5, quality="default",
                                      cache_dir=CACHE)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
