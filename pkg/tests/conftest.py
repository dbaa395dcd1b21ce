import pytest

from streamtest.calibration import default_calibration

_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def calibration():
    return default_calibration()


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for an acceptance criterion, then return the flag."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
