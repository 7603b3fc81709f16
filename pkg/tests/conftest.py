"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import pytest

_results: dict[str, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(marker.args[0], []).append((report.outcome, item.name, dict(report.user_properties)))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, runs in _results.items():
        ok = all(outcome == "passed" for outcome, _, _ in runs)
        details = "; ".join(f"{k}={v}" for _, _, props in runs for k, v in props.items())
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
