import numpy as np
import pytest
from hypothesis import strategies as st

from counterbalance.trade_matrix import TradeMatrix


def make_matrix(n, seed, *, export_share=(0.05, 0.6), dense=True):
    """Random strongly connected exposure matrix built without the oracle helpers.

    A full positive off-diagonal block (or a ring when ``dense`` is False)
    guarantees strong connectivity.
    """
    rng = np.random.default_rng(seed)
    if dense:
        W = rng.uniform(0.1, 1.0, size=(n, n))
    else:
        W = np.zeros((n, n))
        for k in range(n):
            W[k, (k + 1) % n] = rng.uniform(0.5, 1.0)
            W[k, rng.integers(n)] += rng.uniform(0.0, 0.5)
    np.fill_diagonal(W, 0.0)
    share = rng.uniform(*export_share, size=n)
    P = W / W.sum(axis=1, keepdims=True) * share[:, None]
    P[np.diag_indices(n)] = 1.0 - P.sum(axis=1)
    gdp = rng.uniform(0.5, 20.0, size=n)
    return TradeMatrix.from_array(P, gdp)


@st.composite
def trade_matrices(draw, sizes=(2, 3, 4, 6, 8)):
    n = draw(st.sampled_from(sizes))
    seed = draw(st.integers(0, 2**32 - 1))
    dense = draw(st.booleans())
    return make_matrix(n, seed, dense=dense)


@pytest.fixture
def two_by_two():
    return TradeMatrix.from_array([[0.8, 0.2], [0.4, 0.6]], [10.0, 5.0], ["AAA", "BBB"])


# One line per acceptance criterion, printed at the end of every run.
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def record_criterion():
    def record(key, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        ACCEPTANCE_LINES[key] = f"[{status}] criterion {key}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abcd")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
