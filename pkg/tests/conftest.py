import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from oracles import verdicts  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if verdicts.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(verdicts.LINES):
            terminalreporter.write_line(line)
