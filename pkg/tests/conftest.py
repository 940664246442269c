def pytest_terminal_summary(terminalreporter):
    acceptance = terminalreporter.config.pluginmanager.get_plugin("test_acceptance")
    module = acceptance or __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
