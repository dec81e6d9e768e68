import random
import time
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return random.Random(1234)


_SEARCHES: dict = {}


@pytest.fixture(scope="session")
def search():
    """Memoized intruder_search(protocol, depth, oracle=...) shared across modules."""
    from offline_finder.auth import IntruderCapabilities, intruder_search

    def run(protocol: str, depth: int = 8, oracle: bool = False):
        key = (protocol, depth, oracle)
        if key not in _SEARCHES:
            _SEARCHES[key] = intruder_search(protocol, depth, IntruderCapabilities(backdoor_oracle=oracle))
        return _SEARCHES[key]

    return run


# ---- acceptance reporting

SESSION_START = time.monotonic()
_ACCEPTANCE: dict[str, str] = {}


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so its suite-duration check sees the whole session
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance.py" in it.nodeid)


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        name = report.nodeid.rsplit("::", 1)[1]
        _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[1][len("criterion"):] or 0)):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]}  {name}")
