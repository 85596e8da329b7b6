import numpy as np
import pytest

from cuqds.data import ScenarioConfig, generate_scenario

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_scenario():
    cfg = ScenarioConfig(n_train=300, n_val=100, n_test=200, L=8, J=6, D=2, seed=3)
    return cfg, generate_scenario(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
