import contextlib

import pytest

# acceptance criterion number -> (passed, detail); filled by the ``criterion`` fixture
RESULTS: dict[int, tuple[bool, str]] = {}


class _Outcome:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion():
    """Context manager that records a pass or fail line for one acceptance criterion."""

    @contextlib.contextmanager
    def run(number: int, title: str):
        out = _Outcome()
        try:
            yield out
        except BaseException as exc:
            RESULTS[number] = (False, f"{title}: {out.detail or type(exc).__name__}")
            print(f"criterion {number}: FAIL  {title} {out.detail}")
            raise
        RESULTS[number] = (True, f"{title}: {out.detail}")
        print(f"criterion {number}: PASS  {title} {out.detail}")

    return run


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
