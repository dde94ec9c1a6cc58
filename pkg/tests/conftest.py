import os

import pytest

# deterministic single-threaded default for the suite; tests that compare
# thread counts pass them explicitly
os.environ.setdefault("DICKE_CPT_THREADS", "1")

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record the pass/fail line of one acceptance criterion (printed again at the end)."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 13):
        terminalreporter.write_line(_ACCEPTANCE.get(number, f"criterion {number:>2}: NOT RUN (errored or deselected)"))
