import pytest

_LINES = []


@pytest.fixture
def record():
    """Collect one pass/fail line per acceptance criterion."""

    def add(label, passed, detail=""):
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}".rstrip())
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
