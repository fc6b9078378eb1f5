import re

_CRITERION = re.compile(r"test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the measured values."""
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if report.when != "call" and outcome != "error":
                continue
            m = _CRITERION.search(report.nodeid)
            if not m or "test_acceptance" not in report.nodeid:
                continue
            measured = dict(report.user_properties).get("measured", "")
            rows[int(m.group(1))] = ("PASS" if outcome == "passed" else "FAIL", measured)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(rows):
        status, measured = rows[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {measured}".rstrip())
