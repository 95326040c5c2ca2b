import pytest
from hypothesis import HealthCheck, settings

from latticelab.walk import preset

settings.register_profile("lab", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def srw():
    return preset("srw")


@pytest.fixture
def lazy():
    return preset("lazy-srw")


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(number, title, ok, detail)."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
