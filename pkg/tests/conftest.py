"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""
import re

_RESULTS: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry = _RESULTS.setdefault(int(m.group(1)), {"name": m.group(2), "passed": True, "notes": []})
        entry["passed"] &= report.outcome == "passed"
        for name, content in report.user_properties:
            if name == "measured":
                entry["notes"].append(content)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        r = _RESULTS[num]
        status = "PASS" if r["passed"] else "FAIL"
        detail = f" ({'; '.join(r['notes'])})" if r["notes"] else ""
        terminalreporter.write_line(f"{status} criterion {num}: {r['name'].replace('_', ' ')}{detail}")
