import pytest

CRITERIA: dict[str, str] = {}


@pytest.fixture
def record_criterion():
    """Store a one-line PASS/FAIL summary for an acceptance criterion."""

    def record(label: str, checks: list[tuple[str, bool]]) -> None:
        failed = [name for name, ok in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = f" (failed: {', '.join(failed)})" if failed else ""
        CRITERIA[label] = f"{label}: {status}{detail}"
        print(CRITERIA[label])

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(CRITERIA, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(CRITERIA[label])
