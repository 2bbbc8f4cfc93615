import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (title, outcome, short reason)
_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        reason = ""
        if rep.failed:
            crash = getattr(rep.longrepr, "reprcrash", None)
            reason = crash.message.splitlines()[0] if crash else str(rep.longrepr).splitlines()[-1]
        elif rep.skipped:
            reason = "skipped"
        status = "PASS" if rep.passed else "FAIL"
        _ACCEPTANCE[number] = (title, status, reason)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, reason = _ACCEPTANCE[number]
        line = f"criterion {number} [{title}]: {status}"
        if reason:
            line += f" -- {reason[:160]}"
        terminalreporter.write_line(line)
