import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def seq(values):
    """A single-example, single-channel sequence ``(1, L, 1)``."""
    return np.asarray(values, dtype=np.float64).reshape(1, -1, 1)


def kern(values):
    """A single-in, single-out kernel ``(K, 1, 1)``."""
    return np.asarray(values, dtype=np.float64).reshape(-1, 1, 1)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
