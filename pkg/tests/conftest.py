import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mdiqrng.decoy import ExperimentConfig
from mdiqrng.sim import DetectorModel

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# Operating point used throughout: SPDE 0.55, dark counts 8e-5, 3% preparation error.
OPERATING_DETECTOR = DetectorModel(eta=0.55, p_d=8e-5, eps_afterpulse=0.0, e_prep=0.03)
OPERATING_CONFIG = ExperimentConfig()

_ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def operating_detector():
    return OPERATING_DETECTOR


@pytest.fixture
def operating_config():
    return OPERATING_CONFIG


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def acceptance_line():
    """Record the one-line verdict of an acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        _ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_ACCEPTANCE_LINES[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[k])
