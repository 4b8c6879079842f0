import pytest

from stopctl.diffusion_core import MarketParams
from stopctl.habit_model import HabitSpec, PreferenceParams, solve_equilibrium


@pytest.fixture(scope="session")
def market():
    return MarketParams(0.05, 0.3, 0.1)


@pytest.fixture(scope="session")
def prefs():
    return PreferenceParams(0.7, 0.7)


@pytest.fixture(scope="session")
def eq015(market, prefs):
    return solve_equilibrium(market, prefs, HabitSpec.linear(0.15))


@pytest.fixture(scope="session")
def eq_slope(market, prefs):
    cache = {}

    def get(slope):
        if slope not in cache:
            cache[slope] = solve_equilibrium(market, prefs, HabitSpec.linear(slope))
        return cache[slope]

    return get


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
