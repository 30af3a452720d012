from fractions import Fraction

import pytest

from karma_pricing.congestion import GameConfig, LatencyModel, system_optimum
from karma_pricing.distributions import TruncNormal, Uniform
from karma_pricing.pricing import design_equality, design_equity, equality_bound, solve_theta

SCALE = Fraction(10)
EPSILON = 0.05


@pytest.fixture(scope="session")
def model():
    return LatencyModel()


@pytest.fixture(scope="session")
def game():
    return GameConfig(urgency=Uniform(0.0, 2.0), weights=TruncNormal(1.0, 0.15, 0.5, 1.5))


@pytest.fixture(scope="session")
def so(model, game):
    return system_optimum(model, game)


@pytest.fixture(scope="session")
def equity_policy(model, game, so):
    return design_equity(so, model, game, SCALE, epsilon=EPSILON)


@pytest.fixture(scope="session")
def equality(model, game, so):
    design = solve_theta(game, so)
    policy, design = design_equality(design, so, model, game, SCALE, epsilon=EPSILON)
    return policy, equality_bound(design, so, game)


# --- acceptance reporting ----------------------------------------------------

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA.setdefault(marker.args[0], []).append((report.passed, detail or item.name))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        ok = all(passed for passed, _ in results)
        details = " | ".join(d for _, d in results)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({details})")
