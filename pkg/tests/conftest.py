import functools

import pytest

from pinning.dist import Constant, make_power_law
from pinning.renewal import mass_function

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def power_law(alpha, M=2**16):
    return make_power_law(alpha, Constant(1.0), M)


@functools.lru_cache(maxsize=None)
def power_u(alpha, M=2**16):
    return mass_function(power_law(alpha, M))


@pytest.fixture
def law():
    return power_law


@pytest.fixture
def u_of():
    return power_u


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
