from __future__ import annotations

import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def record_criterion():
    def record(n: int, ok: bool, detail: str, seconds: float, limit: float | None = None):
        timed = ok and (limit is None or seconds < limit)
        budget = "" if limit is None else f" (limit {limit:g}s)"
        line = f"criterion {n}: {'PASS' if timed else 'FAIL'}  {detail}  [{seconds:.2f}s{budget}]"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return timed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
