import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report(request):
    """Record one acceptance verdict line; all lines are printed in the terminal summary."""
    lines = request.config.stash[_LINES]

    def emit(criterion: str, ok: bool, detail: str) -> bool:
        lines.append((criterion, f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"))
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
