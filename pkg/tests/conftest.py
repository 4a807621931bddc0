import numpy as np
import pytest

from decaylab.damping import CoefficientField, make_cubic_exp, make_power_law
from decaylab.weight import WeightSystem

# filled by test_acceptance, echoed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def cubic():
    return make_power_law(3)


@pytest.fixture(scope="session")
def cubic_ws(cubic):
    return WeightSystem(cubic, 1.0)


@pytest.fixture(scope="session")
def cubic_exp():
    return make_cubic_exp()


@pytest.fixture(scope="session")
def bump():
    return CoefficientField()


@pytest.fixture(scope="session")
def full_field():
    return CoefficientField.constant(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
