import sys

import pytest
from hypothesis import HealthCheck, settings

from kornlab.geometry import named_shape, rasterize_shape

settings.register_profile(
    "kornlab", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("kornlab")


@pytest.fixture(scope="session")
def square16():
    return rasterize_shape(named_shape("square", 2), 1 / 16)


@pytest.fixture(scope="session")
def ball16():
    return rasterize_shape(named_shape("ball", 2), 1 / 8)


@pytest.fixture(scope="session")
def square8():
    return rasterize_shape(named_shape("square", 2), 1 / 8)


@pytest.fixture(scope="session")
def cube6():
    return rasterize_shape(named_shape("cube", 3), 1 / 6)


@pytest.fixture(scope="session")
def segment32():
    return rasterize_shape(named_shape("segment", 1), 1 / 32)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
