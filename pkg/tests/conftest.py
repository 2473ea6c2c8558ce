"""Shared pytest hooks.

The acceptance tests record one summary line per criterion; echo them
after the run so they show up without -s.
"""

import sys


def pytest_terminal_summary(terminalreporter):
    lines = []
    # the module may be imported bare or under the tests package
    for name in ("test_acceptance", "tests.test_acceptance"):
        mod = sys.modules.get(name)
        for line in getattr(mod, "REPORT_LINES", ()):
            if line not in lines:
                lines.append(line)
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
