import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from symatlas.expr import Node, NodeKind  # noqa: E402

UNARY_KINDS = [NodeKind.INV, NodeKind.EXP, NodeKind.LOG, NodeKind.SIN]


def trees(max_leaves: int = 12, max_arity: int = 4):
    """Arbitrary arity-valid trees (not grammar constrained)."""
    leaf = st.just(Node(NodeKind.VAR))

    def extend(children):
        unary = st.builds(lambda k, c: Node(k, (c,)), st.sampled_from(UNARY_KINDS), children)
        nary = st.builds(lambda k, cs: Node(k, tuple(cs)),
                         st.sampled_from([NodeKind.ADD, NodeKind.MUL]),
                         st.lists(children, min_size=2, max_size=max_arity))
        return unary | nary

    return st.recursive(leaf, extend, max_leaves=max_leaves)


@pytest.fixture(scope="session")
def limit3():
    from symatlas.enumerator import enumerate_expressions
    return enumerate_expressions(3)


@pytest.fixture(scope="session")
def limit5():
    from symatlas.enumerator import enumerate_expressions
    return enumerate_expressions(5)


@pytest.fixture(scope="session")
def limit5_outputs(limit5):
    from symatlas.evaluator import evaluate_many
    return evaluate_many([e.tree for e in limit5.expressions])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records and prints one criterion line."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
