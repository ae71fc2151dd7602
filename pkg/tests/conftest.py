"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
from collections import OrderedDict

import pytest

CRITERIA = OrderedDict([
    (1, "CTC forward vs brute-force enumeration"),
    (2, "collapse ground truth and properties"),
    (3, "CTC fibers sum to one"),
    (4, "finite-difference gradient on quadratic oracle"),
    (5, "momentum update arithmetic and p <= p_max"),
    (6, "highpass filter response"),
    (7, "two-phase attack structure"),
    (8, "desk-scale end-to-end on toy victim"),
    (9, "loopback HTTP equivalence"),
    (10, "metric formula checks"),
])

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(n, []).append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, desc in CRITERIA.items():
        if n not in _outcomes:
            continue
        ok = all(_outcomes[n])
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {desc} "
                      f"({sum(_outcomes[n])}/{len(_outcomes[n])} checks)")
