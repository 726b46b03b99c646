import pytest

ACCEPTANCE = {}


@pytest.fixture
def record_criterion(request):
    """Call with (number, title, passed, detail) to log an acceptance outcome."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
