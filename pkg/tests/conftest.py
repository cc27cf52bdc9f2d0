import numpy as np
import pytest

from plate_eig.assembly import build_system
from plate_eig.mesh import make_mesh, make_unit_square_mesh, refine_uniform


@pytest.fixture(scope="session")
def square2():
    return make_mesh("square", 2)


@pytest.fixture(scope="session")
def two_triangles():
    return make_unit_square_mesh(1, pattern="diagonal")


@pytest.fixture(scope="session", params=["A", "B"])
def small_system(request):
    """Eliminated mixed system on the once-refined n0=2 square."""
    return build_system(refine_uniform(make_mesh("square", 2)), request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
