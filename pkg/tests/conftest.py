import numpy as np
import pytest

from fracwave import build_mode_table


@pytest.fixture(scope="session")
def table_2d():
    return build_mode_table(2, 8, 0.7)


@pytest.fixture(scope="session")
def table_1d():
    return build_mode_table(1, 32, 0.5)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240101)
