import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    """``acceptance(number, passed, detail)`` records one criterion outcome."""
    def record(number: int, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE[number] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip())
