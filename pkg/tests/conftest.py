import contextlib

import pytest

_OUTCOMES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Context manager recording a PASS/FAIL line for an acceptance criterion."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        state = {"detail": ""}
        try:
            yield state
        except BaseException:
            _OUTCOMES[number] = f"FAIL  [{number:2d}] {title} {state['detail']}".rstrip()
            print(_OUTCOMES[number])
            raise
        _OUTCOMES[number] = f"PASS  [{number:2d}] {title} {state['detail']}".rstrip()
        print(_OUTCOMES[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        terminalreporter.write_line(_OUTCOMES[number])
