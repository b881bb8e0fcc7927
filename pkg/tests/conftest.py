import numpy as np
import pytest
from hypothesis import strategies as st

from hedgegad.graph import build_graph


@st.composite
def small_graphs(draw, max_nodes=30, num_classes=None, min_nodes=2, allow_unlabeled=True):
    """Random simple graphs with labels, up to ``max_nodes`` nodes and 1-2 relations."""
    n = draw(st.integers(min_nodes, max_nodes))
    k = num_classes or draw(st.integers(2, 4))
    lo = -1 if allow_unlabeled else 0
    labels = draw(st.lists(st.integers(lo, k - 1), min_size=n, max_size=n))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
    num_rel = draw(st.integers(1, 2))
    rels = [draw(st.lists(pairs, max_size=3 * n)) for _ in range(num_rel)]
    feats = np.arange(n, dtype=float).reshape(-1, 1)
    return build_graph(n, [np.array(r, dtype=np.int64).reshape(-1, 2) for r in rels], feats,
                       np.array(labels), k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance result; the terminal summary prints them in order."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
