"""Prints one `criterion N: PASS|FAIL` line per acceptance check at the end
of every run, so the gate's verdicts are visible even when capture is on."""

import re

_CRITERIA: dict[int, bool] = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    num = int(match.group(1))
    if report.when == "call":
        _CRITERIA[num] = _CRITERIA.get(num, True) and report.passed
    elif report.failed:  # setup or teardown error
        _CRITERIA[num] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_CRITERIA):
        verdict = "PASS" if _CRITERIA[num] else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict}")
