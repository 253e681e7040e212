"""Shared fixtures; collects acceptance-criterion verdicts for the terminal summary."""

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record ``(criterion, passed, detail)``; the line is echoed at the end of the run."""

    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
