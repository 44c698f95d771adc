import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from basket_asymptotics.hamiltonian import HamiltonianSystem
from basket_asymptotics.model import BasketSpec

settings.register_profile(
    "repro",
    derandomize=True,
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")

_acceptance = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.get_closest_marker("criterion") is not None:
        mark = item.get_closest_marker("criterion")
        detail = dict(item.user_properties).get("detail", "")
        _acceptance.append((mark.args[0], mark.args[1], rep.passed, detail))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(_acceptance, key=lambda r: r[0]):
        line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def unit2():
    return HamiltonianSystem(BasketSpec.symmetric(2))

