"""Shared pytest config: prints the acceptance checklist after a run."""

CHECKLIST = []


def record_check(name: str, passed: bool, detail: str) -> None:
    """Register one acceptance checklist line for the terminal summary."""
    CHECKLIST.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not CHECKLIST:
        return
    terminalreporter.section("acceptance checklist")
    for name, passed, detail in CHECKLIST:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} {name}: {detail}")
