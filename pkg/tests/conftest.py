"""Collects the acceptance tests' outcomes and prints one line per criterion."""

_criteria = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number = int(name.split("_")[2])
        detail = dict(report.user_properties).get("detail", "")
        _criteria[number] = (report.outcome == "passed", report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        ok, seconds, detail = _criteria[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s)"
        terminalreporter.write_line(line + (f" {detail}" if detail else ""))
