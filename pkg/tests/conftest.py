import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "status": "PASS", "notes": []})
    if report.when == "call" and hasattr(report, "wasxfail"):
        entry["status"] = "FAIL"
        entry["notes"].append("known failure: " + report.wasxfail)
    elif report.failed:
        entry["status"] = "FAIL"
    elif report.skipped and report.when == "setup":
        entry["status"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        line = f"criterion {number:2d}: {entry['status']}  {entry['title']}"
        if entry["notes"]:
            line += f"  ({entry['notes'][0]})"
        terminalreporter.write_line(line)
