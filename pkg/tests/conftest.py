import pytest

_ACCEPTANCE = {}


class AcceptanceLog:
    """Collects one verdict line per acceptance criterion."""

    def record(self, number, title, ok, detail=""):
        _ACCEPTANCE[number] = ("PASS" if ok else "FAIL", title, detail)
        return ok

    def skip(self, number, title, reason):
        _ACCEPTANCE[number] = ("SKIP", title, reason)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, title, detail = _ACCEPTANCE[number]
        line = f"[{verdict}] {number}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
