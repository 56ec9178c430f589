import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running campaign checks")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
