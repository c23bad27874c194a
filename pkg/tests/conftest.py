from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from shrinklab.maps import load_map
from shrinklab.perturb import build_sqk_perturbation

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def tent():
    return load_map("tent")


@pytest.fixture(scope="session")
def sqk_identity():
    return build_sqk_perturbation(load_map("identity"), 4, 4, Fraction(1, 2))


@pytest.fixture(scope="session")
def sqk_identity8():
    return build_sqk_perturbation(load_map("identity"), 8, 8, Fraction(1, 2))


@pytest.fixture(scope="session")
def sqk_tent():
    return build_sqk_perturbation(load_map("tent"), 8, 8, Fraction(1, 4))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
