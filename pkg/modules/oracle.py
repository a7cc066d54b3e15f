# modules/oracle.py
"""
Ground-truth Markov-chain computations used to validate the DiLap path.
Everything here is dense and capped at validation scale (settings.ORACLE_CAP)
except the Monte Carlo walker, which works on the sparse transition matrix.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import scipy.linalg
from scipy import sparse, stats

from config import settings
from modules.commute import CommuteMatrices
from modules.errors import ConvergenceError, DenseCapError, GraphError
from modules.graph_core import StochasticMatrix
from modules.spectral import PerronVector

logger = logging.getLogger("CgnnApp")


@dataclass(frozen=True)
class OracleReport:
    method: str                       # series | dense | monte_carlo
    values: Dict[str, float]
    error_bound: Optional[float] = None
    walks: Optional[int] = None
    seed: Optional[int] = None
    censored: int = 0
    extra: Dict[str, float] = field(default_factory=dict)


def _check_size(p: StochasticMatrix, cap: int) -> int:
    n = p.num_nodes
    if n > cap:
        raise DenseCapError(n, cap, hint="oracle paths are validation-scale only")
    return n


def stationary_dense(p: StochasticMatrix, cap: int = settings.ORACLE_CAP) -> PerronVector:
    """
    pi from the linear system pi^T (I - P) = 0, sum(pi) = 1 (last balance equation replaced
    by the normalization). Exact to rounding, unlike the power-iteration vector.
    """
    n = _check_size(p, cap)
    a = (np.eye(n) - p.dense()).T
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = scipy.linalg.solve(a, rhs)
    except scipy.linalg.LinAlgError as e:
        raise ConvergenceError(f"stationary system is singular ({e}); chain is not irreducible") from e
    if (pi <= 0).any():
        raise ConvergenceError("stationary distribution has non-positive entries; "
                               "the chain is not irreducible")
    residual = float(np.abs(p.matrix.T @ pi - pi).sum())
    return PerronVector(pi=pi, iterations_used=0, residual=residual)


def _dense_inputs(p: StochasticMatrix, pi: PerronVector, cap: int):
    n = _check_size(p, cap)
    if pi.pi.shape != (n,):
        raise GraphError("Perron vector size does not match the transition matrix")
    # a 1e-10 residual in pi biases every series term by the same amount; re-solve densely
    exact = stationary_dense(p, cap).pi
    logger.debug(f"Oracle: pi refined by {np.abs(exact - pi.pi).max():.2e}")
    return p.dense(), exact


# ----- FUNDAMENTAL MATRIX -----
def dense_fundamental(p: StochasticMatrix, pi: PerronVector, cap: int = settings.ORACLE_CAP) -> np.ndarray:
    """Z = (I - P + J Pi)^-1 - J Pi."""
    pd, w = _dense_inputs(p, pi, cap)
    n = pd.shape[0]
    j_pi = np.tile(w, (n, 1))        # J Pi = e pi^T
    try:
        inv = scipy.linalg.solve(np.eye(n) - pd + j_pi, np.eye(n))
    except scipy.linalg.LinAlgError as e:
        raise ConvergenceError(f"I - P + J Pi is singular ({e}); chain is not irreducible") from e
    return inv - j_pi


def series_fundamental(p: StochasticMatrix, pi: PerronVector, t_max: int,
                       cap: int = settings.ORACLE_CAP) -> np.ndarray:
    """Partial sum of (P^t - e pi^T) for t = 0..t_max."""
    pd, w = _dense_inputs(p, pi, cap)
    n = pd.shape[0]
    e_pi = np.tile(w, (n, 1))
    z = np.zeros((n, n))
    pt = np.eye(n)
    for _ in range(int(t_max) + 1):
        z += pt - e_pi
        pt = pt @ pd
    return z


def hitting_from_Z(z: np.ndarray, pi: PerronVector) -> CommuteMatrices:
    """h(i, j) = (Z_jj - Z_ij) / pi_j, c = h + h^T."""
    w = np.asarray(pi.pi, dtype=float)
    if (w <= 0).any():
        raise GraphError("hitting times need a strictly positive stationary distribution")
    h = (np.diag(z)[None, :] - z) / w[None, :]
    return CommuteMatrices(hitting=h, commute=h + h.T)


# ----- MONTE CARLO -----
def _row_cdf_keys(p: sparse.csr_matrix) -> np.ndarray:
    """Row i's cumulative probabilities shifted into (i, i + 1] for one global searchsorted."""
    n = p.shape[0]
    keys = np.empty(p.nnz)
    for i in range(n):
        lo, hi = p.indptr[i], p.indptr[i + 1]
        if hi == lo:
            raise GraphError(f"node {i} has no out-edge; the walk would be absorbed")
        c = np.cumsum(p.data[lo:hi])
        c[-1] = 1.0
        keys[lo:hi] = i + c
    return keys


def monte_carlo_hitting(p: StochasticMatrix, src: int, dst: int, walks: int,
                        max_steps: int = settings.MC_MAX_STEPS, seed: int = settings.SEED,
                        confidence: float = settings.MC_CONFIDENCE,
                        block_size: int = settings.MC_BLOCK_SIZE) -> OracleReport:
    """
    Mean first-passage steps src -> dst over seeded walks.
    Walks run in blocks; block b draws from SeedSequence([seed, b]) so the estimate does
    not depend on how blocks are scheduled. Walks longer than max_steps are censored.
    """
    n = p.num_nodes
    if walks < 1:
        raise GraphError("monte_carlo_hitting needs walks >= 1")
    if not (0 <= src < n and 0 <= dst < n):
        raise GraphError(f"src/dst outside [0, {n})")
    if src == dst:
        return OracleReport(method="monte_carlo", values={"hitting": 0.0}, error_bound=0.0,
                            walks=walks, seed=seed)

    pm = p.matrix.tocsr()
    keys = _row_cdf_keys(pm)
    targets = pm.indices

    steps_all = []
    censored = 0
    for b, start in enumerate(range(0, walks, block_size)):
        count = min(block_size, walks - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        state = np.full(count, src, dtype=np.int64)
        steps = np.zeros(count, dtype=np.int64)
        active = np.arange(count)
        t = 0
        while active.size and t < max_steps:
            t += 1
            u = rng.random(active.size)
            pos = np.searchsorted(keys, state[active] + u, side="right")
            state[active] = targets[pos]
            steps[active] = t
            active = active[state[active] != dst]
        censored += int(active.size)
        done = np.ones(count, dtype=bool)
        done[active] = False
        steps_all.append(steps[done])

    samples = np.concatenate(steps_all) if steps_all else np.zeros(0)
    if samples.size == 0:
        raise ConvergenceError(f"no walk from {src} reached {dst} within {max_steps} steps")
    if censored:
        logger.warning(f"MC: {censored}/{walks} walks {src}->{dst} censored at {max_steps} steps")

    mean = float(samples.mean())
    if samples.size > 1:
        z = float(stats.norm.ppf(0.5 + confidence / 2.0))
        half = z * float(samples.std(ddof=1)) / np.sqrt(samples.size)
    else:
        half = float("inf")
    return OracleReport(method="monte_carlo", values={"hitting": mean}, error_bound=half,
                        walks=walks, seed=seed, censored=censored,
                        extra={"confidence": confidence})


# ----- PPR CHAIN -----
def ppr_transition(p: StochasticMatrix, gamma: float, cap: int = settings.ORACLE_CAP) -> StochasticMatrix:
    """gamma P + (1 - gamma) ee^T / N, materialized densely (comparison variant only)."""
    if not 0.0 <= gamma <= 1.0:
        raise GraphError(f"gamma must lie in [0, 1], got {gamma}")
    n = p.num_nodes
    if n > cap:
        raise DenseCapError(n, cap, hint="the teleporting chain is dense")
    dense = gamma * p.dense() + (1.0 - gamma) / n
    return StochasticMatrix(matrix=sparse.csr_matrix(dense))
