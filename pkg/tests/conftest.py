import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spectree.ensemble import FAMILIES, solve_criticality

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def crits():
    return {name: solve_criticality(make()) for name, make in FAMILIES.items()}


@pytest.fixture(scope="session")
def uniform(crits):
    return crits["uniform"]


@pytest.fixture(scope="session")
def binary(crits):
    return crits["binary"]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
