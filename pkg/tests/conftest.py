import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphprobe.graph import Graph, gen_erdos_renyi  # noqa: E402

_ACCEPTANCE = []


@pytest.fixture
def record():
    """Log one acceptance line; the terminal summary prints them all."""

    def _record(criterion, ok, detail=""):
        _ACCEPTANCE.append((criterion, bool(ok), detail))
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_graph(n, p, seed):
    return gen_erdos_renyi(n, p, np.random.default_rng(seed))


@pytest.fixture
def single_edge():
    return Graph(2, ((0, 1),))
