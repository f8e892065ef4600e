"""Collects acceptance-criterion verdicts and prints them after the run."""
import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, checks: dict[str, bool], detail: str):
        passed = all(checks.values())
        failed = [k for k, ok in checks.items() if not ok]
        _VERDICTS[number] = (passed, detail + (f"; failed: {', '.join(failed)}" if failed else ""))
        assert passed, f"criterion {number}: {_VERDICTS[number][1]}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        passed, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
