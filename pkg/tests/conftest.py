import pytest

_ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for the acceptance summary."""
    def record(number, name, ok, detail):
        _ACCEPTANCE[(number, name)] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
