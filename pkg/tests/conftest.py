import pytest

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def report():
    def put(criterion: int, ok: bool, detail: str):
        ACCEPTANCE[criterion] = (bool(ok), detail)

    return put


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
