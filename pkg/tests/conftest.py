import pytest

_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record (and print) a one-line PASS/FAIL verdict, then assert it."""

    def record(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        _LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance verdicts")
        for line in _LINES:
            terminalreporter.write_line(line)
