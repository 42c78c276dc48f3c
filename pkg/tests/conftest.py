import numpy as np
import pytest

from fkgen import PathFunctional
from fkgen.fixtures import load_model

ACCEPTANCE_LINES = []


@pytest.fixture
def three_state():
    return load_model("three_state", horizon=4)


@pytest.fixture
def values_functional():
    def make(model, horizon=None, normalized=False):
        v = np.asarray(model.values, dtype=float)
        n = model.horizon if horizon is None else horizon
        return PathFunctional.homogeneous(lambda x: v[np.asarray(x)], n, normalized=normalized)
    return make


@pytest.fixture
def report():
    """Record one acceptance line; shown in the terminal summary."""
    def emit(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
