import numpy as np
import pytest

from netaipw.netgraph import Network

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance verdict; printed in the terminal summary."""

    def _report(criterion: int, passed: bool, detail: str) -> None:
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE_LINES.append(f"[{status}] criterion {criterion}: {detail}")
        print(_ACCEPTANCE_LINES[-1])

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def path4() -> Network:
    return Network.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
