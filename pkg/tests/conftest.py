import numpy as np
import pytest

from gerrysim import DualGraph, Partition, VoteModel, make_grid_graph


def path_graph(pops=(1, 1, 1, 1), votes=None):
    n = len(pops)
    if votes is None:
        votes = [(p, 0) for p in pops]
    vd, vr = zip(*votes)
    return DualGraph(pops, vd, vr, [(i, i + 1) for i in range(n - 1)])


def grid_halves(rows, cols, pop_per_node=10, vote_model=None, tol=0.02):
    g = make_grid_graph(rows, cols, pop_per_node, vote_model)
    assign = (np.arange(rows * cols) % cols >= cols // 2).astype(int)
    return g, Partition(g, assign, 2, tol)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid6():
    return make_grid_graph(6, 6, 100, VoteModel.gradient(0.2, 0.8, noise=0.05), seed=3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
