import numpy as np
import pytest

from maxlor.charge import reference_profile
from maxlor.fields import FourierGrid

# Verdict lines of the acceptance suite, printed once at the end of the session.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def rho():
    return reference_profile(1.0)


@pytest.fixture(scope="session")
def small_grid():
    """Coarse box used by the algebraic tests; identities there are exact per mode."""
    return FourierGrid(32, 8.0)


@pytest.fixture(scope="session")
def fine_grid():
    """Box whose spacing resolves rho_hat, used where a continuum oracle is compared."""
    return FourierGrid(32, 4.0)


@pytest.fixture(scope="session")
def spec_grid():
    return FourierGrid(64, 32.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_field(grid, rng, width=1.0, solenoidal=True, center=(0.0, 0.0, 0.0)):
    """Smooth localized random vector field given by its coefficients."""
    from maxlor.fields import project_solenoidal

    x, y, z = grid.coordinates()
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    env = np.exp(-r2 / (2.0 * width**2))
    comps = []
    for _ in range(3):
        c = rng.normal(size=4)
        comps.append(env * (c[0] + c[1] * x + c[2] * y + c[3] * z))
    fhat = grid.from_physical(np.stack(comps))
    return project_solenoidal(grid, fhat) if solenoidal else fhat


def random_state(grid, rng, width=1.0):
    from maxlor.state import State

    return State(random_field(grid, rng, width), random_field(grid, rng, width),
                 rng.normal(size=3), rng.normal(size=3))
