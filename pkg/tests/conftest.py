import warnings

import numpy as np
import pytest

from spinmagnus import sweeps
from spinmagnus.integrators import MagnusConvergenceWarning


@pytest.fixture(autouse=True)
def _quiet_convergence_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MagnusConvergenceWarning)
        yield


def _system(name):
    return sweeps.cached_system({"example": name})


_REFS = {}


def _reference(name):
    if name not in _REFS:
        _REFS[name] = sweeps.reference_for(_system(name))
    return _REFS[name]


@pytest.fixture(scope="session")
def ex1i():
    return _system("1i")


@pytest.fixture(scope="session")
def ex1ii():
    return _system("1ii")


@pytest.fixture(scope="session")
def ex1iii():
    return _system("1iii")


@pytest.fixture(scope="session")
def ex2i():
    return _system("2i")


@pytest.fixture(scope="session")
def ex2ii():
    return _system("2ii")


@pytest.fixture(scope="session")
def ref1i():
    return _reference("1i")


@pytest.fixture(scope="session")
def ref1iii():
    return _reference("1iii")


@pytest.fixture(scope="session")
def ref2ii():
    return _reference("2ii")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the terminal summary prints all of them."""
    table = request.config.stash.setdefault(_CRITERIA, {})

    def record(number, passed, detail):
        table[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_CRITERIA, {})
    if not table:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(table):
        passed, detail = table[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
