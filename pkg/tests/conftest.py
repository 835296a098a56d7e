import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from assessix.space import FilteredSpace

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def e1():
    """Four uniform atoms, two periods: {1234} -> {12}{34} -> atoms."""
    return FilteredSpace([0.25] * 4, [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]])


@pytest.fixture
def two_atoms():
    return FilteredSpace([0.5, 0.5], [[[0, 1]]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[str, bool] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
            terminalreporter.write_line(f"{key} {'PASS' if ACCEPTANCE[key] else 'FAIL'}")
