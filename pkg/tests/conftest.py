"""Prints a one-line pass/fail verdict per acceptance criterion after the
run, so `pytest -v` output ends with a compact acceptance report."""

import re

CRITERIA = {
    1: "oracle exponent recovery (beta/gamma/alpha windows, R^2, < 30 s)",
    2: "exact-fit identity on noiseless data",
    3: "mass conservation, 1000 randomized cases",
    4: "mid-latitude cell areas at X=32 and X=80",
    5: "relative anomaly scale equivalence",
    6: "scaling-window detection and outlier exclusion",
    7: "resampling determinism, CI coverage, sub-grid sizing",
    8: "bot and minimum-activity filter correctness",
    9: "source-mix and reply/quote fixture proportions",
    10: "all exponents superlinear on superlinear truth",
}

_results: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::.*test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    num = int(m.group(1))
    if report.failed:
        _results[num] = "FAIL"
    elif report.skipped:
        _results.setdefault(num, "FAIL")
    elif report.when == "call" and report.passed:
        _results.setdefault(num, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        verdict = _results.get(num, "FAIL (not run)")
        terminalreporter.write_line(
            f"criterion {num:2d}: {verdict} - {CRITERIA[num]}")
