import numpy as np
import pytest

from modules import datasets, graph_core, rewiring


def random_digraph(seed: int, n: int, p: float) -> graph_core.DiGraph:
    rng = np.random.default_rng(seed)
    hits = rng.random((n, n)) < p
    np.fill_diagonal(hits, False)
    rows, cols = np.nonzero(hits)
    return graph_core.build_digraph(n, zip(rows.tolist(), cols.tolist()))


def rewired_random(seed: int, n: int, p: float, d: int = 4) -> graph_core.DiGraph:
    g = random_digraph(seed, n, p)
    x = np.random.default_rng(seed + 10_000).standard_normal((n, d))
    return rewiring.rewire(g, x).rewired


@pytest.fixture
def two_node_loops():
    """P = ee^T / 2: the calibration fixture."""
    return graph_core.build_digraph(2, [(0, 0), (0, 1), (1, 0), (1, 1)])


@pytest.fixture
def two_cycle():
    return graph_core.build_digraph(2, [(0, 1), (1, 0)])


@pytest.fixture
def make_random_digraph():
    return random_digraph


@pytest.fixture
def make_rewired():
    return rewired_random


@pytest.fixture(scope="session")
def two_block_200():
    return datasets.generate_synthetic("two_block", 200, seed=0)


@pytest.fixture
def two_cliques():
    """Nodes 0-3 and 4-7 form bidirectional 4-cliques joined by the bridge 3 <-> 4."""
    edges = []
    for block in (range(0, 4), range(4, 8)):
        edges += [(i, j) for i in block for j in block if i != j]
    edges += [(3, 4), (4, 3)]
    g = graph_core.build_digraph(8, edges)
    labels = np.array([0] * 4 + [1] * 4)
    x = np.array([[1.0, 0.0]] * 4 + [[0.0, 1.0]] * 4)
    return g, x, labels
