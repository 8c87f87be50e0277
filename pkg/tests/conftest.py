"""Collects criterion outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    label, title = mark.args
    entry = _OUTCOMES.setdefault(label, [title, True, False])
    if rep.when == "call":
        entry[2] = True
    if rep.failed:
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_OUTCOMES, key=lambda s: int(s[2:]) if s[2:].isdigit() else s):
        title, ok, ran = _OUTCOMES[label]
        verdict = "PASS" if ok and ran else "FAIL"
        terminalreporter.write_line(f"{verdict} {label} {title}")
