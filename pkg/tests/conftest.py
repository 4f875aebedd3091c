"""Shared test infrastructure.

The acceptance tests register one (number, label, ok, detail) record per
criterion; the terminal-summary hook prints them as a final pass/fail
table so the result of every criterion is visible in one place even when
an assertion made the run red.
"""

RESULTS: list[tuple[int, str, bool, str]] = []


def record(num: int, label: str, ok: bool, detail: str = "") -> None:
    RESULTS.append((int(num), label, bool(ok), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, ok, detail in sorted(RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {num:2d} [{status}] {label}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
