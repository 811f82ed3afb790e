import numpy as np
import pytest

from eprcs.spdc_model import REFERENCE_PARAMS, balanced_grid, build_state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def state16():
    """Reference parameters on the 16-pixel balanced grid."""
    return build_state(REFERENCE_PARAMS, balanced_grid(REFERENCE_PARAMS, 16))


@pytest.fixture(scope="session")
def state8():
    return build_state(REFERENCE_PARAMS, balanced_grid(REFERENCE_PARAMS, 8))


def phantom16():
    """Three constant blocks on a 16x16 background."""
    x = np.zeros((16, 16))
    x[2:7, 3:9] = 1.0
    x[9:14, 2:6] = 0.6
    x[8:13, 9:14] = 0.3
    return x


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
