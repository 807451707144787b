import numpy as np
import pytest
from hypothesis import settings

from lagflm.selection import Evaluator
from lagflm.sim import SimConfig, generate_dataset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def sim100():
    return generate_dataset(SimConfig(n=100, seed=0))


@pytest.fixture(scope="session")
def sim200():
    return generate_dataset(SimConfig(n=200, seed=0))


@pytest.fixture(scope="session")
def evaluator100(sim100):
    return Evaluator(sim100.data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
