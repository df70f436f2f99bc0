import pytest

_results: dict[int, list] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, desc = mark.args
    _results.setdefault(number, []).append((desc, item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        runs = _results[number]
        ok = all(passed for _, _, passed in runs)
        desc = runs[0][0]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {desc}  ({len(runs)} test(s))")
