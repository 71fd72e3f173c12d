import pytest

_REPORT = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(number, passed, detail)``."""

    def add(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _REPORT.append((number, line))
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_REPORT):
        terminalreporter.write_line(line)
