import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(autouse=True)
def _clean_tolerance_env(monkeypatch):
    monkeypatch.delenv("RCC_TOLERANCE_SCALE", raising=False)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
