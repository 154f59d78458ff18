import pytest

# acceptance tests append (label, passed, detail); shown after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES
