import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE[item.nodeid] = (doc, rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for doc, passed in _ACCEPTANCE.values():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {doc}")
