# modules/backends.py
"""
Commute backend dispatch.
  dilap         DiLap pseudoinverse factors + closed form (the default, sparse)
  dense_oracle  fundamental matrix of the chain + (Z_jj - Z_ij) / pi_j (dense)
  ppr           dense_oracle on the teleporting chain (comparison variant, dense)
"""

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config import settings
from modules import commute, graph_core, oracle, rewiring, spectral
from modules.errors import DenseCapError, GraphError
from modules.graph_core import DiGraph

logger = logging.getLogger("CgnnApp")

Edge = Tuple[int, int]


def commute_for_graph(g: DiGraph, pairs: Sequence[Edge], backend: str = settings.DEFAULT_BACKEND,
                      rank_q: Optional[int] = settings.RANK_Q, seed: int = settings.SEED,
                      dense_cap: int = settings.DENSE_CAP,
                      ppr_gamma: float = settings.PPR_GAMMA) -> np.ndarray:
    """
    Commute values for `pairs` on g, which must be irreducible and aperiodic for the
    dilap / dense_oracle backends (i.e. already rewired).
    rank_q=None asks the dilap backend for full numerical rank.
    """
    if backend not in settings.BACKENDS:
        raise GraphError(f"unknown commute backend '{backend}' (expected one of {settings.BACKENDS})")
    n = g.num_nodes
    if backend == "dilap":
        p = graph_core.transition_matrix(g)
        pi = spectral.perron_vector(p)
        t = spectral.dilap(g, p)
        q = n if rank_q is None else min(int(rank_q), n)
        factors = spectral.pseudoinverse_factors(t, q, seed=seed)
        return commute.edge_commute_times(factors, pi, pairs)

    cap = min(dense_cap, settings.ORACLE_CAP)
    if n > cap:
        raise DenseCapError(n, cap, hint=f"backend '{backend}' is dense-only; use backend 'dilap'")
    if backend == "dense_oracle":
        p = graph_core.transition_matrix(g)
    else:
        # teleport over the self-looped graph so every row has mass before mixing
        p = oracle.ppr_transition(graph_core.transition_matrix(graph_core.add_self_loops(g)),
                                  ppr_gamma, cap=cap)
    pi = oracle.stationary_dense(p, cap=cap)
    z = oracle.dense_fundamental(p, pi, cap=cap)
    return commute.edge_values_from_dense(oracle.hitting_from_Z(z, pi).commute, pairs)


def calibration_report() -> Dict[str, float]:
    """Both closed forms on the 2-node fully self-looped graph (P = ee^T / 2)."""
    g = graph_core.build_digraph(2, [(0, 0), (0, 1), (1, 0), (1, 1)])
    p = graph_core.transition_matrix(g)
    pi = spectral.perron_vector(p)
    factors = spectral.pseudoinverse_factors(spectral.dilap(g, p), q=1)
    cm_dilap = commute.hitting_commute_closed_form(factors, pi)
    cm_oracle = oracle.hitting_from_Z(oracle.dense_fundamental(p, pi), pi)
    report = {
        "dilap_h01": float(cm_dilap.hitting[0, 1]),
        "dilap_c01": float(cm_dilap.commute[0, 1]),
        "dense_oracle_h01": float(cm_oracle.hitting[0, 1]),
        "dense_oracle_c01": float(cm_oracle.commute[0, 1]),
    }
    report["oracle_to_dilap_ratio"] = report["dense_oracle_c01"] / report["dilap_c01"]
    logger.info("Calibration: " + ", ".join(f"{k}={v:.6g}" for k, v in report.items()))
    return report


def commute_change_report(g: DiGraph, x: np.ndarray, backend: str = "dense_oracle",
                          rank_q: Optional[int] = None, seed: int = settings.SEED,
                          variant: str = settings.REWIRING) -> Dict[str, float]:
    """
    delta between commute times before and after rewiring.
    The original graph is reduced to the largest strongly connected component of its
    absorbing-free core (self-loops added for aperiodicity); the rewired graph is
    evaluated on the same node pairs. Both vectors are mean-normalized first.
    """
    core, core_map = graph_core.remove_absorbing(g)
    comp, comp_map = graph_core.largest_strong_component(core)
    node_map = core_map[comp_map]
    comp = graph_core.add_self_loops(comp)
    pairs_local = [(i, j) for i, j in comp.edges if i != j]
    if not pairs_local:
        raise GraphError("largest strongly connected component has no non-loop edge")
    pairs_orig = [(int(node_map[i]), int(node_map[j])) for i, j in pairs_local]

    c_orig = commute_for_graph(comp, pairs_local, backend=backend, rank_q=rank_q, seed=seed)
    rewired = rewiring.rewire_variant(g, x, variant).rewired
    c_rew = commute_for_graph(rewired, pairs_orig, backend=backend, rank_q=rank_q, seed=seed)
    delta = commute.commute_change_delta(commute.normalize_commute(c_orig),
                                         commute.normalize_commute(c_rew))
    logger.info(f"Commute change: delta={delta:.5g} over {len(pairs_orig)} pairs "
                f"(component of {comp.num_nodes}/{g.num_nodes} nodes)")
    return {"delta": delta, "pairs": float(len(pairs_orig)), "component_nodes": float(comp.num_nodes)}
