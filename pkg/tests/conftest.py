from __future__ import annotations

import sys


def pytest_terminal_summary(terminalreporter):
    """List the acceptance criteria results, one line each, after the test report."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
