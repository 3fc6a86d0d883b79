"""Shared test plumbing: collects acceptance criterion results and prints
one PASS/FAIL line per criterion in the terminal summary."""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
