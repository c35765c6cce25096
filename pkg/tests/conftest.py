import re
import sys

import pytest

from keplerscore.packing import gen_fcc, gen_hcp


@pytest.fixture(scope="session")
def fcc6():
    return gen_fcc(6.0)


@pytest.fixture(scope="session")
def hcp6():
    return gen_hcp(6.0)


_RAN: set[int] = set()


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", report.nodeid)
    if m and (report.when == "call" or report.failed):
        _RAN.add(int(m.group(1)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not _RAN:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RAN):
        terminalreporter.write_line(mod.VERDICTS.get(n, f"criterion {n:>2}: FAIL  errored before reporting"))
