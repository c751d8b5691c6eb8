import numpy as np
import pytest

from wptrelay.channel import Rayleigh, SystemParams, rayleigh_params
from wptrelay.geometry import default_environment


@pytest.fixture(scope="session")
def env():
    return default_environment()


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def rparams():
    return rayleigh_params()


@pytest.fixture(params=["lognormal", "rayleigh"], scope="session")
def any_params(request):
    return SystemParams() if request.param == "lognormal" else rayleigh_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion; the lines are repeated in the summary."""
    lines = request.config._acceptance_lines

    def record(key: str, ok: bool, detail: str) -> bool:
        line = f"CRITERION {key}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
