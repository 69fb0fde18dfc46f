import numpy as np
import pytest

from privrl.envs import make_env


@pytest.fixture
def small_mdp():
    return make_env("random-dense", 3, 2, 3, seed=11)


@pytest.fixture
def four_state_mdp():
    return make_env("random-dense", 4, 2, 3, seed=7)


def random_spd(rng, d, floor=0.5):
    m = rng.standard_normal((d, d))
    return m @ m.T + floor * np.eye(d)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the session
# ---------------------------------------------------------------------------

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    if call.excinfo is None:
        status = "PASS"
    elif call.excinfo.errisinstance(pytest.xfail.Exception) or item.get_closest_marker("xfail"):
        status = "FAIL (expected; see reason)"
    else:
        status = "FAIL"
    _acceptance[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, status = _acceptance[number]
        terminalreporter.write_line(f"criterion {number}: {status:<28} {title}")
