import pytest

_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one summary line per acceptance criterion."""

    def record(number, passed, detail, gating=True):
        tag = ("PASS" if passed else "FAIL") if gating else "DIAG"
        _LINES.append(f"criterion {number}: {tag}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
