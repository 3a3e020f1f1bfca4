import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the assertion still decides the test outcome."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _VERDICTS.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(line)
