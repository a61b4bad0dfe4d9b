import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Collect one pass/fail line per acceptance criterion; printed in the
    terminal summary regardless of capture settings."""
    status = "PASS" if ok else "FAIL"
    _ACCEPTANCE_LINES.append(f"criterion {number:02d} {status}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
