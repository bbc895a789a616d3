"""Shared fixtures and the acceptance-criteria summary."""

import pytest

ACCEPTANCE_RESULTS = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Store the outcome of one acceptance criterion for the terminal summary."""
    prev = ACCEPTANCE_RESULTS.get(criterion)
    if prev is not None:
        passed = passed and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE_RESULTS[criterion] = (passed, detail)


@pytest.fixture(scope="session")
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
