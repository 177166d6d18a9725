import numpy as np
import pytest

from nspgnn.graph import DataSplit, Dataset, build_graph


def make_split(n, train_ids, val_ids=(), test_ids=None):
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[list(train_ids)] = True
    val[list(val_ids)] = True
    if test_ids is None:
        test = ~(train | val)
    else:
        test[list(test_ids)] = True
    return DataSplit(train=train, val=val, test=test)


def make_dataset(edges, x, y, n_classes=None, train_ids=None, val_ids=(), test_ids=None):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    g = build_graph(edges, n)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if train_ids is None:
        train_ids = range(n)
        test_ids = []
    split = make_split(n, train_ids, val_ids, test_ids)
    return Dataset(g, x, y, n_classes, split)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# Acceptance criteria report one PASS/FAIL line each in the terminal summary.
ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
