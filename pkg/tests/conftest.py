"""Shared fixtures and the acceptance summary printed at the end of a run."""

import pytest

from bravl.channel import Channel, build_grid
from bravl.kinematics import PhysicalParams

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def ground_channel():
    return Channel(0, 0.5)


@pytest.fixture(scope="session")
def grid100():
    return build_grid(100)
