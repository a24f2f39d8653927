import re
from collections import OrderedDict

import pytest

from bscs.config import reference_config

_AC = re.compile(r"test_ac(\d+)_")
_results: "OrderedDict[int, list]" = OrderedDict()


def pytest_runtest_logreport(report):
    m = _AC.search(report.nodeid)
    if not m or "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _results.setdefault(int(m.group(1)), []).append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_results):
        outcomes = _results[ac]
        failed = [nid.split("::")[-1] for nid, o in outcomes if o != "passed"]
        status = "PASS" if not failed else "FAIL"
        detail = f"  ({', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"AC-{ac:02d} {status}{detail}")


@pytest.fixture
def reference():
    """Reference station factory: ``reference(B=..., C=...)``."""
    def make(B=130, C=120, N=12, S=2, **rates):
        return reference_config(batteries_b=B, chargers_c=C, capacity_n=N, swap_servers_s=S, **rates)
    return make
