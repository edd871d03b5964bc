import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ted.params import SpaceBounds

settings.register_profile("ted", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ted")

DESK = SpaceBounds(p_min=4.0, p_max=19.0, mu_min=2.0, mu_max=4.0, K_max=2, L_max=2)


@pytest.fixture
def desk():
    return DESK


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance verdicts: one line per criterion in the terminal summary ----

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    n = mark.args[0]
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    prev = _VERDICTS.get(n)
    if prev is None or prev[0] == "PASS":
        _VERDICTS[n] = (status, detail or item.name)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        status, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
