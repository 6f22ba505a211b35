import sys

import pytest

from teleorch.auth import Subject
from teleorch.clock import SimClock
from teleorch.platform import Platform

START_TS = 1_700_000_000.0  # 2023-11-14T22:13:20Z


@pytest.fixture
def clock():
    return SimClock(START_TS)


@pytest.fixture
def platform(clock):
    return Platform(clock=clock, seed=7)


@pytest.fixture
def seeded(platform):
    return platform.seed_demo()


@pytest.fixture
def admin(platform):
    return Subject("user", platform.admin_user_id)


@pytest.fixture
def clinician(seeded):
    return Subject("user", seeded["users"]["clinician"])


@pytest.fixture
def operator(seeded):
    return Subject("user", seeded["users"]["operator"])


@pytest.fixture
def site_admin(seeded):
    return Subject("user", seeded["users"]["site_admin"])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)
