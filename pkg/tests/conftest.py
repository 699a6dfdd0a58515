import numpy as np
import pytest

from mptorder import (
    Dataset,
    OrderChain,
    parse_eqn,
    product_binomial_dataset,
    product_binomial_model,
)

PAIR_EQN = """\
pair E1 c*r
pair E4 c*(1-r)
pair E2 (1-c)*u*u
pair E3 (1-c)*u*(1-u)
pair E3 (1-c)*(1-u)*u
pair E4 (1-c)*(1-u)*(1-u)
single F1 u
single F2 (1-u)
"""

PAIR_COUNTS = """\
tree,category,count
pair,E1,6
pair,E2,2
pair,E3,5
pair,E4,8
single,F1,9
single,F2,6
"""


@pytest.fixture(scope="session")
def pair_model():
    return parse_eqn(PAIR_EQN)


@pytest.fixture(scope="session")
def pair_data():
    return Dataset.from_csv(PAIR_COUNTS)


@pytest.fixture(scope="session")
def toy3():
    """P=3 binomial trees with y=(4,10,16) of n=20 and chain th1<th2<th3."""
    model = product_binomial_model(3)
    data = product_binomial_dataset([4, 10, 16], [20, 20, 20])
    chain = OrderChain(("th1", "th2", "th3"), "A")
    return model, data, chain


def ks_statistic(draws, cdf):
    """One-sample Kolmogorov-Smirnov statistic against a callable CDF."""
    x = np.sort(np.asarray(draws, dtype=float))
    n = x.size
    c = cdf(x)
    grid = np.arange(1, n + 1) / n
    return float(np.maximum(np.abs(c - grid), np.abs(c - (grid - 1 / n))).max())


def ks_threshold(n, alpha=0.001):
    """Asymptotic one-sample KS critical value."""
    return float(np.sqrt(-np.log(alpha / 2.0) / 2.0) / np.sqrt(n))


ACCEPTANCE_RESULTS: list[tuple[int, str, str]] = []


def record(criterion: int, status: str, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((criterion, status, detail))
    print(f"ACCEPTANCE {criterion}: {status} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{criterion}] {status:7s} {detail}")
