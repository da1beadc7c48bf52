import pytest

_LINES: dict[str, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(key: str, ok: bool, detail: str) -> None:
        line = f"{key} {'PASS' if ok else 'FAIL'}: {detail}"
        _LINES[key] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_LINES):
        terminalreporter.write_line(_LINES[key])
