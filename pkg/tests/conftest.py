import numpy as np
import pytest

from bcwfsim.grid_potential import (DEFAULT_CONSTANTS, SpatialGrid, build_double_barrier,
                                    build_flat)
from bcwfsim.spectral import build_energy_basis, resonance_search


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid()


@pytest.fixture(scope="session")
def rtd(grid):
    return build_double_barrier(grid, 10.0, 2.0, 0.5)


@pytest.fixture(scope="session")
def flat(grid):
    return build_flat(grid)


@pytest.fixture(scope="session")
def resonances(rtd):
    return resonance_search(rtd, (0.002, 0.5))


@pytest.fixture(scope="session")
def rtd_basis(rtd):
    return build_energy_basis(rtd)


@pytest.fixture(scope="session")
def flat_basis(flat):
    return build_energy_basis(flat)


@pytest.fixture(scope="session")
def constants():
    return DEFAULT_CONSTANTS


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed after the test report
_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(log):
        terminalreporter.write_line(log[key])
