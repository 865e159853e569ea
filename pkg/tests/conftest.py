import numpy as np
import pytest

from adhpl import _accel
from adhpl.data import split, synth_lowrank
from adhpl.model import LatentState, init_state

BACKENDS = ["numpy"] + (["numba"] if _accel.NUMBA_ENABLED else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def small_split():
    m, _ = synth_lowrank(30, 40, 3, 0.25, 0.05, seed=11)
    return split(m, (0.7, 0.1, 0.2), seed=12)


def random_state(rng, n_rows, n_cols, F, scale=0.5):
    return LatentState(rng.uniform(-scale, scale, (n_rows, F)),
                       rng.uniform(-scale, scale, (n_cols, F)),
                       rng.uniform(-scale, scale, n_rows),
                       rng.uniform(-scale, scale, n_cols))


@pytest.fixture
def small_state(small_split):
    tr = small_split.train
    return init_state(tr.n_rows, tr.n_cols, 4, 0.1, seed=13)


_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        terminalreporter.write_line(f"{outcome.upper():8} {name}")
