import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    info = _criteria.get(report.nodeid)
    if info is not None:
        info["outcome"] = report.outcome
        info["duration"] = report.duration


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            _criteria[item.nodeid] = dict(number=m.args[0], title=m.args[1], outcome="not run", duration=0.0)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for info in sorted(_criteria.values(), key=lambda d: (d["number"], d["title"])):
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(info["outcome"], info["outcome"].upper())
        tr.write_line(f"criterion {info['number']}: {verdict}  {info['title']}  ({info['duration']:.1f} s)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
