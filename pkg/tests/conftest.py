import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
GOLDEN = TESTS / "golden"

sys.path.insert(0, str(TESTS))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            n, title = m.args
            _criteria.setdefault(n, {"title": title, "ran": 0, "failed": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if not m:
        return
    info = _criteria[m.args[0]]
    if rep.when == "call" and rep.passed:
        info["ran"] += 1
    elif rep.failed or rep.skipped:
        info["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        info = _criteria[n]
        status = "FAIL" if info["failed"] else "PASS" if info["ran"] else "NOT RUN"
        terminalreporter.write_line(f"{status} criterion {n}: {info['title']}")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
