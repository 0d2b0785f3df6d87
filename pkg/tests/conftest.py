import functools

CRITERIA: dict[int, tuple[str, str]] = {}


def criterion(number: int, title: str):
    """Record a PASS/FAIL line for an acceptance criterion."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                CRITERIA[number] = ("FAIL", title)
                print(f"CRITERION {number:2d}: FAIL  {title}")
                raise
            CRITERIA[number] = ("PASS", title)
            print(f"CRITERION {number:2d}: PASS  {title}")

        return run

    return wrap


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        status, title = CRITERIA[number]
        terminalreporter.write_line(f"CRITERION {number:2d}: {status}  {title}")
