import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from loglap.manifold import build_circle, build_flat_torus

settings.register_profile(
    "loglap", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("loglap")


@pytest.fixture(scope="session")
def circle64():
    return build_circle(64, 1.0)


@pytest.fixture(scope="session")
def circle8():
    return build_circle(8, 1.0)


@pytest.fixture(scope="session")
def torus8():
    return build_flat_torus(8, 8, 2 * np.pi, 2 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
