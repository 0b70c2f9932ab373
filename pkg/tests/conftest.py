from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from axilkit import Dataset, TrainConfig

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

DATA_DIR = Path(__file__).parent / "data"


def random_case(seed, n_range=(5, 200), m_range=(1, 50), leaves_range=(2, 16),
                learning_rates=(0.1, 0.5, 1.0), n_test=20):
    """Randomised train/test problem in the ranges used by the acceptance suite."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    f = int(rng.integers(1, 11))
    X = rng.normal(size=(n + n_test, f))
    if rng.random() < 0.3:
        # coarse grid, so that features have many tied values
        X = np.round(X * 2) / 2
    y = X @ rng.normal(size=f) + np.sin(2 * X[:, 0]) + rng.normal(scale=0.3, size=n + n_test)
    cfg = TrainConfig(
        num_trees=int(rng.integers(m_range[0], m_range[1] + 1)),
        learning_rate=float(rng.choice(learning_rates)),
        max_leaves=int(rng.integers(leaves_range[0], leaves_range[1] + 1)),
        min_leaf_size=int(rng.integers(1, 4)),
    )
    return Dataset(X[:n], y[:n]), X[n:], cfg


@pytest.fixture
def fixture4():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    return Dataset(x, y, labels=["a", "b", "c", "d"])


@pytest.fixture
def fixture4_config():
    return TrainConfig(num_trees=1, learning_rate=0.5, max_leaves=2)


@pytest.fixture
def fixture4_csv():
    return DATA_DIR / "fixture4.csv"


ACCEPTANCE_RESULTS = []


def record_criterion(number, title, ok, detail):
    """Store one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
