import numpy as np
import pytest

from modalns.fields import ModalScalarField, ModalVectorField
from modalns.grid import make_grid

# Lines appended by the acceptance module; echoed in the terminal summary so
# they survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(16, 16, 4.0, 4.0)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 32, 4.0, 4.0)


def random_scalar(rng, grid, K):
    c = rng.standard_normal((K + 1, *grid.shape))
    s = rng.standard_normal((K + 1, *grid.shape))
    s[0] = 0.0
    return ModalScalarField(grid, c, s)


def random_vector(rng, grid, K):
    c = rng.standard_normal((3, K + 1, *grid.shape))
    s = rng.standard_normal((3, K + 1, *grid.shape))
    s[:, 0] = 0.0
    return ModalVectorField(grid, c, s)


def bump(grid, r0=1.5, z0=2.0, w=0.5):
    r, z = grid.mesh()
    return np.exp(-((r - r0) ** 2 + (z - z0) ** 2) / w ** 2)
