import pytest

from fracpoin.covering import cube_tree_covering, john_tree_covering
from fracpoin.fields import Grid
from fracpoin.geometry import Cube, l_shape, square
from fracpoin.whitney import whitney_decompose


@pytest.fixture(scope="session")
def unit_square():
    return square()


@pytest.fixture(scope="session")
def ell():
    return l_shape()


@pytest.fixture(scope="session")
def square_grid(unit_square):
    """8 x 8 grid on the unit square."""
    return Grid.from_depth(unit_square, 3)


@pytest.fixture(scope="session")
def coarse_grid(unit_square):
    """4 x 4 grid on the unit square."""
    return Grid.from_depth(unit_square, 2)


@pytest.fixture(scope="session")
def square_whitney(unit_square):
    return whitney_decompose(unit_square, 3)


@pytest.fixture(scope="session")
def john_cover(square_whitney):
    return john_tree_covering(square_whitney)


@pytest.fixture(scope="session")
def chain_cover():
    """2 x 2 chain covering of the unit square."""
    return cube_tree_covering(Cube((0, 0), 1), m=2)
