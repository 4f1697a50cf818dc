import sys


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines recorded by test_acceptance.py, one per criterion."""
    lines = []
    for name, module in list(sys.modules.items()):
        if name.endswith("test_acceptance") and hasattr(module, "RESULTS"):
            lines = module.RESULTS
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
