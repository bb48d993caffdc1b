"""Shared pytest hooks: collects the one-line acceptance verdicts."""

VERDICTS = {}


def record(criterion: int, passed: bool, detail: str = "") -> None:
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    VERDICTS[criterion] = line
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])
