import pytest

_LINES: list = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line; the lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _LINES.append((number, f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
