import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import RESULTS  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
