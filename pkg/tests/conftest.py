import pytest

# criterion number -> (passed, one-line detail), filled by the acceptance tests
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, title: str, checks) -> None:
        """Store the outcome of one acceptance criterion and assert it."""
        checks = list(checks)
        passed = bool(checks) and all(c.passed for c in checks)
        detail = "; ".join(c.line() for c in checks) or "no checks produced"
        CRITERIA[number] = (passed, f"{title}: {detail}")
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        passed, line = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2} {'PASS' if passed else 'FAIL'}  {line}")
