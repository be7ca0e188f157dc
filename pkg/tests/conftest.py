ACCEPTANCE: dict = {}


def record(num: int, ok: bool, detail: str) -> None:
    """Store the outcome of one acceptance criterion, printed at the end of the run."""
    ACCEPTANCE[num] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
