import pytest

CRITERIA = range(1, 12)
_lines: dict[int, str] = {}
_started: set[int] = set()


@pytest.fixture
def criterion():
    """Return ``report(number, ok, detail)``; every reported line is repeated in the terminal summary."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _lines[number] = line
        return ok

    return report


def pytest_runtest_setup(item):
    number = getattr(item.module, "CRITERION_OF", {}).get(item.name)
    if number is not None:
        _started.add(number)


def pytest_terminal_summary(terminalreporter):
    if not _started:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        if number in _lines:
            terminalreporter.write_line(_lines[number])
        elif number in _started:
            terminalreporter.write_line(f"criterion {number:2d}: FAIL  (raised before reporting)")
