import pytest

_CRITERIA: dict = {}


class CriterionLog:
    """Collects acceptance outcomes; each criterion may have several parts."""

    def __init__(self, store):
        self.store = store

    def record(self, criterion: int, part: str, passed: bool, detail: str = "") -> None:
        self.store.setdefault(criterion, []).append((part, passed, detail))


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog(_CRITERIA)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part}: {'ok' if ok else 'FAILED'} {info}".strip() for part, ok, info in parts)
        terminalreporter.write_line(f"criterion {number}: {verdict} | {detail}")
