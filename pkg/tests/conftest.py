def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance")
        for k in sorted(LINES):
            terminalreporter.write_line(LINES[k])
