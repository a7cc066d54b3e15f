# modules/analysis.py
"""
Label-based diagnostics.
- label similarity matrix M (undirected neighborhoods, same label)
- squared distances of M to A + A^T and to C_in + C_out
- homophily ratio
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import sparse

from modules import graph_core
from modules.commute import ProximityWeights
from modules.errors import GraphError
from modules.graph_core import DiGraph

logger = logging.getLogger("CgnnApp")


@dataclass(frozen=True)
class DiagnosticsReport:
    dist_adjacency: float
    dist_proximity: float
    homophily: float


def _check_labels(g: DiGraph, labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (g.num_nodes,):
        raise GraphError(f"labels cover {y.shape[0] if y.ndim else 0} nodes, graph has {g.num_nodes}")
    if (y < 0).any():
        raise GraphError(f"missing label for node {int(np.flatnonzero(y < 0)[0])}")
    return y


def label_similarity_matrix(g: DiGraph, labels) -> sparse.csr_matrix:
    """M_ij = 1 iff i and j are adjacent in either direction and share a label."""
    y = _check_labels(g, labels)
    n = g.num_nodes
    both = (graph_core.adjacency(g) + graph_core.adjacency(g).T).tocoo()
    same = y[both.row] == y[both.col]
    return sparse.csr_matrix((np.ones(int(same.sum())), (both.row[same], both.col[same])), shape=(n, n))


def heterophily_distances(m: sparse.spmatrix, g: DiGraph, w: ProximityWeights):
    """(||M - (A + A^T)||_F^2, ||M - (C_in + C_out)||_F^2) over the union pattern."""
    a = graph_core.adjacency(g)
    diff_adj = (m - (a + a.T)).tocsr()
    diff_prox = (m - (w.in_matrix() + w.out_matrix())).tocsr()
    dist_adj = float(np.square(diff_adj.data).sum())
    dist_prox = float(np.square(diff_prox.data).sum())
    return dist_adj, dist_prox


def homophily_ratio(g: DiGraph, labels) -> float:
    y = _check_labels(g, labels)
    if g.num_edges == 0:
        raise GraphError("homophily ratio is undefined for a graph without edges")
    return float((y[g.src] == y[g.dst]).mean())


def diagnostics_report(g: DiGraph, labels, w: ProximityWeights) -> DiagnosticsReport:
    m = label_similarity_matrix(g, labels)
    dist_adj, dist_prox = heterophily_distances(m, g, w)
    report = DiagnosticsReport(dist_adjacency=dist_adj, dist_proximity=dist_prox,
                               homophily=homophily_ratio(g, labels))
    logger.info(f"Diagnostics: dist_adjacency={dist_adj:.6g} dist_proximity={dist_prox:.6g} "
                f"homophily={report.homophily:.4f}")
    return report


def format_report(report: DiagnosticsReport) -> str:
    return (f"dist_adjacency = {report.dist_adjacency!r}\n"
            f"dist_proximity = {report.dist_proximity!r}\n"
            f"homophily = {report.homophily!r}\n")


def write_distance_table(path: str, g: DiGraph, labels, w: ProximityWeights):
    """Per-edge rows for external plotting: src dst same_label adjacency proximity_in proximity_out."""
    y = _check_labels(g, labels)
    a = graph_core.adjacency(g)
    sym = (a + a.T).tocsr()
    lines: List[str] = ["src\tdst\tsame_label\tadjacency\tproximity_in\tproximity_out"]
    for i, j in g.edges:
        lines.append(f"{i}\t{j}\t{int(y[i] == y[j])}\t{sym[i, j]:g}\t"
                     f"{w.c_in.get((i, j), 0.0)!r}\t{w.c_out.get((i, j), 0.0)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
