import re
from collections import OrderedDict

import pytest

from bhfreg.synthetic import disk_mesh

_CRITERIA = OrderedDict()


@pytest.fixture(scope="session")
def disk1k():
    return disk_mesh(1000)


@pytest.fixture(scope="session")
def disk300():
    return disk_mesh(300, jitter=0.15, seed=4)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when != "call" and not report.failed:
        return
    n = int(m.group(1))
    ok, details = _CRITERIA.get(n, (True, []))
    ok = ok and not report.failed
    details = details + [v for k, v in report.user_properties if k == "detail"]
    _CRITERIA[n] = (ok, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}"
        if details:
            line += "  " + "; ".join(details)
        terminalreporter.write_line(line)
