"""Prints one verdict line per acceptance criterion after the test run.

Every test class in test_acceptance.py named TestA<n> maps to criterion
A<n>; the criterion passes only if all of its tests passed.  Skipped or
errored tests count as failures because the criterion was not verified.
"""

import re

_CLASS_RE = re.compile(r"test_acceptance\.py::TestA0*(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            match = _CLASS_RE.search(nodeid)
            if match is None:
                continue
            num = int(match.group(1))
            ok = status == "passed"
            verdicts[num] = verdicts.get(num, True) and ok
    if not verdicts:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(verdicts):
        terminalreporter.write_line(
            f"A{num}: {'PASS' if verdicts[num] else 'FAIL'}")
