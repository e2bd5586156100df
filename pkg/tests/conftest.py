"""Per-criterion PASS/FAIL summary for tests marked ``acceptance``.

Mark a test with ``@pytest.mark.acceptance(number, "title")``; a criterion
passes when every test carrying its number passes.
"""

import pytest

_results = {}
_titles = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "_criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        ok = report.outcome == "passed"
        _results[crit] = _results.get(crit, True) and ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        number = marker.args[0]
        _titles.setdefault(number, marker.args[1] if len(marker.args) > 1 else "")
        outcome.get_result()._criterion = number


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        status = "PASS" if _results[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {_titles[number]}")
