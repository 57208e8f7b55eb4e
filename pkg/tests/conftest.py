import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from hjhomog.field import Constant, EnsembleSpec, PoissonBumps, ShiftedPeriodic

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def periodic1d():
    """0.2 (1 - cos 2 pi x) with a random shift; vbar = 0.4."""
    return EnsembleSpec(ShiftedPeriodic("cosine", 1.0, 0.2), 1, 0.4, 7)


@pytest.fixture(scope="session")
def bumps2d():
    return EnsembleSpec(PoissonBumps(0.15, 1.0, 0.4), 2, 0.4, 11)


@pytest.fixture(scope="session")
def zero1d():
    return EnsembleSpec(Constant(0.0), 1, 1.0, 0)


@pytest.fixture(scope="session")
def zero2d():
    return EnsembleSpec(Constant(0.0), 2, 1.0, 0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
