"""Shared fixtures.

The acceptance tests each record one PASS/FAIL line; the terminal
summary reprints them as a block so the verdicts survive output
capture even when every test passes.
"""

from typing import Callable, List

import pytest

_LINES: List[str] = []


@pytest.fixture
def criterion_line() -> Callable[[str], None]:
    def record(line: str) -> None:
        _LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LINES:
        terminalreporter.ensure_newline()
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
