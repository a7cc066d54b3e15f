# modules/rewiring.py
"""
Similarity-based rewiring.
Nodes are ordered by cosine similarity to the mean feature vector (the anchor) and
linked one by one with bidirectional chain edges; a self-loop on every node then makes
the chain walk aperiodic. The result is strongly connected and stays sparse.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from modules import graph_core
from modules.errors import GraphError
from modules.graph_core import DiGraph

logger = logging.getLogger("CgnnApp")

VARIANTS = ("similarity", "symmetric")


@dataclass(frozen=True)
class RewiringResult:
    rewired: DiGraph
    added_edges: Tuple[Tuple[int, int], ...]
    anchor: np.ndarray
    ordering: np.ndarray


def anchor_vector(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise GraphError("anchor needs a non-empty N x d feature matrix")
    return x.mean(axis=0)


def cosine_to_anchor(x: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Cosine of every row with the anchor; zero-norm rows (or a zero anchor) score 0."""
    x = np.asarray(x, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if x.ndim != 2 or anchor.shape != (x.shape[1],):
        raise GraphError(f"anchor dimension {anchor.shape} does not match features {x.shape}")
    row_norms = np.linalg.norm(x, axis=1)
    a_norm = np.linalg.norm(anchor)
    denom = row_norms * a_norm
    sims = np.zeros(x.shape[0])
    ok = denom > 0
    sims[ok] = (x[ok] @ anchor) / denom[ok]
    return sims


def similarity_order(x: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Node ids by descending similarity; ties go to the smaller id."""
    sims = cosine_to_anchor(x, anchor)
    ids = np.arange(sims.shape[0])
    # lexsort: last key is primary
    return np.lexsort((ids, -sims))


def chain_edges(ordering: np.ndarray) -> List[Tuple[int, int]]:
    out: List[Tuple[int, int]] = []
    for a, b in zip(ordering[:-1], ordering[1:]):
        out.append((int(a), int(b)))
        out.append((int(b), int(a)))
    return out


def rewire(g: DiGraph, x: np.ndarray) -> RewiringResult:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != g.num_nodes:
        raise GraphError(f"feature rows ({x.shape[0] if x.ndim else 0}) != graph nodes ({g.num_nodes})")
    anchor = anchor_vector(x)
    ordering = similarity_order(x, anchor)

    existing = set(g.edge_set)
    added: List[Tuple[int, int]] = []
    for e in chain_edges(ordering):
        if e not in existing:
            existing.add(e)
            added.append(e)
    loops = [(i, i) for i in range(g.num_nodes) if (i, i) not in existing]
    added.extend(loops)

    rewired = DiGraph(num_nodes=g.num_nodes, edges=g.edges + tuple(added))
    logger.info(f"Rewire: {g.num_edges} -> {rewired.num_edges} edges "
                f"({len(added) - len(loops)} chain, {len(loops)} self-loops)")
    return RewiringResult(rewired=rewired, added_edges=tuple(added), anchor=anchor, ordering=ordering)


def rewire_variant(g: DiGraph, x: np.ndarray, variant: str = "similarity") -> RewiringResult:
    """`symmetric` rewires the symmetrized graph (direction-blind comparison)."""
    if variant not in VARIANTS:
        raise GraphError(f"unknown rewiring variant '{variant}' (expected one of {VARIANTS})")
    base = graph_core.symmetrize(g) if variant == "symmetric" else g
    return rewire(base, x)


def density_delta(g: DiGraph, g_rewired: DiGraph) -> float:
    """Relative density change; the N^2 denominators cancel."""
    if g.num_nodes != g_rewired.num_nodes:
        raise GraphError("density_delta needs graphs over the same node set")
    if g.num_edges == 0:
        raise GraphError("density_delta is undefined for a graph without edges")
    return (g_rewired.num_edges - g.num_edges) / g.num_edges
