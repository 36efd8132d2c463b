import numpy as np
import pytest

from mlcouple import MLParams, simulate_deterministic

# filled by test_acceptance.py; echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def short_data():
    """300 ms of the (120, 7.5) network sampled every 0.5 ms."""
    return simulate_deterministic(MLParams(I_app=120.0, g_syn=7.5), t_end=300.0,
                                  record_every=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
