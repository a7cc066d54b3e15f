# modules/graph_core.py
"""
Directed graph model used by every other module.
- DiGraph: dense node ids, deduplicated edges with fixed edge indices
- views: adjacency A, transition matrix P, incidence matrix B
- connectivity: strongly connected components, largest component, absorbing-node pruning
- permute: node relabeling / edge reordering (property tests)
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from config import settings
from modules.errors import AbsorbingNodeError, GraphError

logger = logging.getLogger("CgnnApp")

Edge = Tuple[int, int]


# ----- TYPES -----
@dataclass(frozen=True)
class DiGraph:
    """Unweighted simple digraph. Immutable; edge k keeps index k for its lifetime."""
    num_nodes: int
    edges: Tuple[Edge, ...]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def src(self) -> np.ndarray:
        return np.fromiter((e[0] for e in self.edges), dtype=np.int64, count=len(self.edges))

    @cached_property
    def dst(self) -> np.ndarray:
        return np.fromiter((e[1] for e in self.edges), dtype=np.int64, count=len(self.edges))

    @cached_property
    def has_self_loop(self) -> np.ndarray:
        flags = np.zeros(self.num_nodes, dtype=bool)
        loops = self.src == self.dst
        flags[self.src[loops]] = True
        return flags

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.num_nodes)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_nodes)


@dataclass(frozen=True)
class StochasticMatrix:
    """Row-stochastic CSR matrix; row i holds the one-step probabilities out of node i."""
    matrix: sparse.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class IncidenceMatrix:
    """N x M matrix, +1 at the source and -1 at the destination of each edge column."""
    matrix: sparse.csc_matrix


# ----- CONSTRUCTION -----
def build_digraph(num_nodes: int, edges: Iterable[Sequence[int]]) -> DiGraph:
    """Validate ids and drop repeated (src, dst) pairs, keeping the first occurrence."""
    num_nodes = int(num_nodes)
    if num_nodes <= 0:
        raise GraphError("num_nodes must be >= 1")
    seen = set()
    kept: List[Edge] = []
    dropped = 0
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise GraphError(f"edge ({i}, {j}) has a node id outside [0, {num_nodes})")
        if (i, j) in seen:
            dropped += 1
            continue
        seen.add((i, j))
        kept.append((i, j))
    if dropped:
        logger.debug(f"build_digraph: dropped {dropped} duplicate edge(s)")
    return DiGraph(num_nodes=num_nodes, edges=tuple(kept))


def add_self_loops(g: DiGraph) -> DiGraph:
    missing = [(i, i) for i in range(g.num_nodes) if not g.has_self_loop[i]]
    if not missing:
        return g
    return DiGraph(num_nodes=g.num_nodes, edges=g.edges + tuple(missing))


def symmetrize(g: DiGraph) -> DiGraph:
    """Union of g with all reversed edges (the undirected comparison variant)."""
    return build_digraph(g.num_nodes, list(g.edges) + [(j, i) for i, j in g.edges])


# ----- MATRIX VIEWS -----
def adjacency(g: DiGraph) -> sparse.csr_matrix:
    data = np.ones(g.num_edges, dtype=float)
    return sparse.csr_matrix((data, (g.src, g.dst)), shape=(g.num_nodes, g.num_nodes))


def transition_matrix(g: DiGraph) -> StochasticMatrix:
    """P = D^-1 A. Nodes without out-edges are an error, never silently patched."""
    deg = g.out_degrees()
    absorbing = np.flatnonzero(deg == 0)
    if absorbing.size:
        raise AbsorbingNodeError(absorbing.tolist())
    data = 1.0 / deg[g.src]
    p = sparse.csr_matrix((data, (g.src, g.dst)), shape=(g.num_nodes, g.num_nodes))
    p.sort_indices()
    row_err = np.abs(np.asarray(p.sum(axis=1)).ravel() - 1.0).max()
    if row_err > settings.ROW_SUM_TOL:
        raise GraphError(f"transition rows deviate from 1 by {row_err:.3e}")
    return StochasticMatrix(matrix=p)


def incidence_matrix(g: DiGraph) -> IncidenceMatrix:
    """Column k: +1 at src, -1 at dst of edge k; self-loop columns stay empty."""
    cols = np.arange(g.num_edges)
    real = g.src != g.dst
    rows = np.concatenate([g.src[real], g.dst[real]])
    col_idx = np.concatenate([cols[real], cols[real]])
    vals = np.concatenate([np.ones(real.sum()), -np.ones(real.sum())])
    b = sparse.csc_matrix((vals, (rows, col_idx)), shape=(g.num_nodes, g.num_edges))
    return IncidenceMatrix(matrix=b)


# ----- CONNECTIVITY -----
def strong_components(g: DiGraph) -> Tuple[int, np.ndarray]:
    n_comp, labels = csgraph.connected_components(adjacency(g), directed=True, connection="strong")
    return int(n_comp), labels


def strongly_connected(g: DiGraph) -> Tuple[bool, int]:
    n_comp, _ = strong_components(g)
    return n_comp == 1, n_comp


def induced_subgraph(g: DiGraph, nodes: Sequence[int]) -> Tuple[DiGraph, np.ndarray]:
    """Subgraph on `nodes` relabeled 0..k-1 in ascending original id; returns (sub, new->old)."""
    keep = np.unique(np.asarray(nodes, dtype=np.int64))
    if keep.size == 0:
        raise GraphError("induced subgraph needs at least one node")
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    sub_edges = [(int(remap[i]), int(remap[j])) for i, j in g.edges if remap[i] >= 0 and remap[j] >= 0]
    return DiGraph(num_nodes=int(keep.size), edges=tuple(sub_edges)), keep


def largest_strong_component(g: DiGraph) -> Tuple[DiGraph, np.ndarray]:
    n_comp, labels = strong_components(g)
    sizes = np.bincount(labels, minlength=n_comp)
    # ties go to the component holding the smallest node id
    best = labels[np.flatnonzero(sizes[labels] == sizes.max())[0]]
    return induced_subgraph(g, np.flatnonzero(labels == best))


def remove_absorbing(g: DiGraph) -> Tuple[DiGraph, np.ndarray]:
    """Drop out-degree-0 nodes repeatedly until none are left."""
    node_map = np.arange(g.num_nodes)
    cur = g
    while True:
        deg = cur.out_degrees()
        if (deg > 0).all():
            return cur, node_map
        alive = np.flatnonzero(deg > 0)
        if alive.size == 0:
            raise GraphError("every node is absorbing")
        cur, sub_map = induced_subgraph(cur, alive)
        node_map = node_map[sub_map]


# ----- PERMUTATION -----
def _check_perm(perm: Sequence[int], size: int, what: str) -> np.ndarray:
    arr = np.asarray(perm, dtype=np.int64)
    if arr.shape != (size,) or not np.array_equal(np.sort(arr), np.arange(size)):
        raise GraphError(f"{what} permutation is not a bijection on [0, {size})")
    return arr


def permute(g: DiGraph, node_perm: Optional[Sequence[int]] = None,
            edge_perm: Optional[Sequence[int]] = None) -> DiGraph:
    """
    Relabel / reorder a graph.
    - node_perm[v] is the new id of node v
    - edge_perm[k] is the old index of the edge placed at position k
    """
    edges = list(g.edges)
    if edge_perm is not None:
        order = _check_perm(edge_perm, g.num_edges, "edge")
        edges = [edges[k] for k in order]
    if node_perm is not None:
        relabel = _check_perm(node_perm, g.num_nodes, "node")
        edges = [(int(relabel[i]), int(relabel[j])) for i, j in edges]
    return DiGraph(num_nodes=g.num_nodes, edges=tuple(edges))
