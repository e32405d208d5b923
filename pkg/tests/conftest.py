import pytest

_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    marker = report.keywords.get("acceptance") if hasattr(report, "keywords") else None
    if marker is None or not report.nodeid.startswith("tests/test_acceptance.py"):
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            _results[name] = "SKIP"
        elif report.failed:
            _results[name] = "FAIL"
        elif name not in _results:
            _results[name] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_results):
        terminalreporter.write_line(f"{_results[name]:4}  {name}")
