import numpy as np
import pytest

from pitchlab.config import RenderConfig, SimConfig
from pitchlab.render import load_scene_variants


@pytest.fixture(scope="session")
def sim_config():
    return SimConfig()


@pytest.fixture(scope="session")
def render_config():
    return RenderConfig()


@pytest.fixture(scope="session")
def scenes():
    return load_scene_variants()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
