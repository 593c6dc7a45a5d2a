import numpy as np
import pytest

from knnmode import Dataset, OracleSession
from knnmode.dataset import thermometer

# acceptance lines collected by test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def line4():
    """Points -0.5, -0.3, 0.0, 0.5 on one axis."""
    return Dataset(np.array([[-0.5], [-0.3], [0.0], [0.5]]))


@pytest.fixture
def ladder():
    """Point 0 at distances 0.1, 0.3, 0.6 from points 1, 2, 3."""
    return Dataset(thermometer(np.array([0, 1, 3, 6]), 10))


def exact_session(ds, seed=0):
    return OracleSession(ds, "exact", seed=seed)
