"""Shared pytest hooks.

Collects the one-line acceptance results emitted by tests/test_acceptance.py
and replays them in the terminal summary, where they stay visible even though
pytest captures stdout of passing tests.
"""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_lines:
        return
    terminalreporter.section("acceptance results")
    for line in acceptance_lines:
        terminalreporter.write_line(line)
