# modules/commute.py
"""
Hitting / commute times from DiLap factors and the proximity weights derived from them.

  h(i, j) = T+_jj / pi_j - T+_ij / sqrt(pi_i pi_j),   c(i, j) = h(i, j) + h(j, i)

Dense N x N forms exist for small graphs only; the per-edge path works from the
low-rank factors directly. Backend selection lives in modules/backends.py.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse

from config import settings
from modules.errors import DenseCapError, GraphError
from modules.graph_core import DiGraph
from modules.spectral import DiLapMatrix, LowRankFactors, PerronVector

logger = logging.getLogger("CgnnApp")

Edge = Tuple[int, int]


# ----- TYPES -----
@dataclass(frozen=True)
class CommuteMatrices:
    hitting: np.ndarray
    commute: np.ndarray


@dataclass(frozen=True)
class ProximityWeights:
    """
    Per-edge aggregation weights.
    - c_out[(i, j)] for every edge i -> j of A
    - c_in[(i, j)] for every edge j -> i of A (i.e. edge (i, j) of A^T)
    """
    num_nodes: int
    c_in: Mapping[Edge, float]
    c_out: Mapping[Edge, float]

    @staticmethod
    def uniform(g: DiGraph, value: float = 1.0) -> "ProximityWeights":
        c_out = {(i, j): float(value) for i, j in g.edges}
        c_in = {(j, i): float(value) for i, j in g.edges}
        return ProximityWeights(num_nodes=g.num_nodes, c_in=c_in, c_out=c_out)

    def in_matrix(self) -> sparse.csr_matrix:
        return _weights_to_csr(self.c_in, self.num_nodes)

    def out_matrix(self) -> sparse.csr_matrix:
        return _weights_to_csr(self.c_out, self.num_nodes)


def _weights_to_csr(weights: Mapping[Edge, float], n: int) -> sparse.csr_matrix:
    if not weights:
        return sparse.csr_matrix((n, n))
    keys = np.array(sorted(weights), dtype=np.int64)
    vals = np.array([weights[(int(i), int(j))] for i, j in keys], dtype=float)
    return sparse.csr_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(n, n))


# ----- DENSE PATH -----
def _check_dense(n: int, cap: int):
    if n > cap:
        raise DenseCapError(n, cap)


def fundamental_matrix_from_dilap(t: DiLapMatrix, cap: int = settings.DENSE_CAP) -> np.ndarray:
    """Z = T+ (dense Moore-Penrose pseudoinverse)."""
    _check_dense(t.num_nodes, cap)
    return scipy.linalg.pinv(t.matrix.toarray(), atol=0.0, rtol=settings.SVD_RELATIVE_CUTOFF)


def _check_pi(pi: PerronVector) -> np.ndarray:
    p = np.asarray(pi.pi, dtype=float)
    if (p <= 0).any():
        raise GraphError("hitting times need a strictly positive stationary distribution")
    return p


def hitting_commute_closed_form(factors: LowRankFactors, pi: PerronVector,
                                cap: int = settings.DENSE_CAP) -> CommuteMatrices:
    p = _check_pi(pi)
    n = p.shape[0]
    _check_dense(n, cap)
    tdag = factors.pinv_dense()
    inv_sqrt = 1.0 / np.sqrt(p)
    h = (np.diag(tdag) / p)[None, :] - tdag * np.outer(inv_sqrt, inv_sqrt)
    np.fill_diagonal(h, 0.0)
    return CommuteMatrices(hitting=h, commute=h + h.T)


# ----- PER-EDGE PATH -----
def edge_commute_times(factors: LowRankFactors, pi: PerronVector,
                       edges: Sequence[Edge]) -> np.ndarray:
    """c(i, j) for each requested pair from O(q) factor-row products; never forms N x N."""
    p = _check_pi(pi)
    n = p.shape[0]
    if len(edges) == 0:
        return np.zeros(0)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if (e < 0).any() or (e >= n).any():
        raise GraphError(f"edge endpoint outside [0, {n})")
    i, j = e[:, 0], e[:, 1]
    t_ij = factors.pinv_entries(i, j)
    t_ji = factors.pinv_entries(j, i)
    t_ii = factors.pinv_entries(i, i)
    t_jj = factors.pinv_entries(j, j)
    inv_sqrt = 1.0 / np.sqrt(p)
    h_ij = t_jj / p[j] - t_ij * (inv_sqrt[i] * inv_sqrt[j])
    h_ji = t_ii / p[i] - t_ji * (inv_sqrt[j] * inv_sqrt[i])
    c = h_ij + h_ji
    c[i == j] = 0.0
    return c


def edge_values_from_dense(commute: np.ndarray, edges: Sequence[Edge]) -> np.ndarray:
    if len(edges) == 0:
        return np.zeros(0)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return commute[e[:, 0], e[:, 1]]


# ----- PROXIMITY -----
def _row_shifted_exp(rows: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """exp(-(c - row min)): exp(-c) max-normalized per row without underflow."""
    row_min = np.full(n, np.inf)
    np.minimum.at(row_min, rows, values)
    w = np.exp(-(values - row_min[rows]))
    # keep weights strictly positive even for very long commutes
    return np.maximum(w, np.finfo(float).tiny)


def proximity_weights(commute_per_edge: Mapping[Edge, float], g_original: DiGraph) -> ProximityWeights:
    missing = [e for e in g_original.edges if e not in commute_per_edge]
    if missing:
        raise GraphError(f"missing commute value for {len(missing)} edge(s), e.g. {missing[0]}")
    n = g_original.num_nodes
    src, dst = g_original.src, g_original.dst
    vals = np.array([commute_per_edge[e] for e in g_original.edges], dtype=float)
    if vals.size == 0:
        return ProximityWeights(num_nodes=n, c_in={}, c_out={})

    w_out = _row_shifted_exp(src, vals, n)
    # in-rows are keyed by the edge head: A^T row dst holds the edge (src -> dst)
    w_in = _row_shifted_exp(dst, vals, n)
    c_out = {(int(a), int(b)): float(w) for a, b, w in zip(src, dst, w_out)}
    c_in = {(int(b), int(a)): float(w) for a, b, w in zip(src, dst, w_in)}
    return ProximityWeights(num_nodes=n, c_in=c_in, c_out=c_out)


def commute_map(edges: Sequence[Edge], values: np.ndarray) -> Dict[Edge, float]:
    return {(int(a), int(b)): float(v) for (a, b), v in zip(edges, values)}


# ----- DIAGNOSTIC: COMMUTE CHANGE -----
def normalize_commute(values: np.ndarray) -> np.ndarray:
    """Scale a commute vector by its own mean (the 'average normalized' form)."""
    v = np.asarray(values, dtype=float)
    mean = v.mean() if v.size else 0.0
    if mean == 0.0:
        raise GraphError("cannot normalize a commute vector with zero mean")
    return v / mean


def commute_change_delta(c_orig: np.ndarray, c_rew: np.ndarray) -> float:
    """||c_orig - c_rew||_2 / ||c_orig||_2 over the same pair index set."""
    a = np.asarray(c_orig, dtype=float)
    b = np.asarray(c_rew, dtype=float)
    if a.shape != b.shape:
        raise GraphError(f"commute vectors differ in shape: {a.shape} vs {b.shape}")
    denom = np.linalg.norm(a)
    if denom == 0.0:
        raise GraphError("reference commute vector has zero norm")
    return float(np.linalg.norm(a - b) / denom)


def neighbor_order_agreement(g: DiGraph, c_a: Mapping[Edge, float], c_b: Mapping[Edge, float]) -> float:
    """Share of nodes (with >= 2 out-neighbors) whose out-neighbor commute ranking agrees."""
    by_node: Dict[int, list] = {}
    for i, j in g.edges:
        if i != j:
            by_node.setdefault(i, []).append(j)
    agree = total = 0
    for i, nbrs in by_node.items():
        if len(nbrs) < 2:
            continue
        nbrs = sorted(nbrs)
        order_a = sorted(nbrs, key=lambda j: (c_a[(i, j)], j))
        order_b = sorted(nbrs, key=lambda j: (c_b[(i, j)], j))
        total += 1
        agree += order_a == order_b
    return 1.0 if total == 0 else agree / total
