from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from energysched.models import ArrivalModel, PhaseSchedule, validate_channel

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

NINE_STATES = [0, 3, 7, 11, 18, 22, 24, 36, 46]
NINE_PROBS = [Fraction(1, 15)] * 3 + [Fraction(2, 9)] * 3 + [Fraction(2, 45)] * 3


@pytest.fixture
def two_channel():
    return validate_channel([1, 2], [0.75, 0.25])


@pytest.fixture
def two_arrivals():
    return ArrivalModel((0, 1, 2), (0.4, 0.2, 0.4))


@pytest.fixture
def two_schedule(two_channel, two_arrivals):
    return PhaseSchedule.single(two_channel, two_arrivals)


@pytest.fixture
def nine_channel():
    return validate_channel(NINE_STATES, [float(p) for p in NINE_PROBS])


@pytest.fixture
def nine_arrivals():
    return ArrivalModel((0, 20), (0.42, 0.58))


@pytest.fixture
def nine_schedule(nine_channel, nine_arrivals):
    return PhaseSchedule.single(nine_channel, nine_arrivals)


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
