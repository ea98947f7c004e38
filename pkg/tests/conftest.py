import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: ``acceptance(passed, detail)``."""

    def record(passed, detail=""):
        _ACCEPTANCE.append((request.node.name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
