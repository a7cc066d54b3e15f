# modules/spectral.py
"""
Spectral pieces of the commute-time pipeline.
- perron_vector: power iteration on P^T (stationary distribution)
- dilap / weighted_dilap: T = B diag(P_e) B^T and Pi T, assembled sparsely
- randomized_truncated_svd: sketch + power iterations + small dense SVD
- pseudoinverse_factors: low-rank factors of T^+ = V S^-1 U^T with a relative cutoff
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
from scipy import sparse

from config import settings
from modules.errors import ConvergenceError, DegenerateOperatorError, GraphError
from modules.graph_core import DiGraph, StochasticMatrix

logger = logging.getLogger("CgnnApp")

MatrixLike = Union[np.ndarray, sparse.spmatrix]


# ----- TYPES -----
@dataclass(frozen=True)
class PerronVector:
    pi: np.ndarray
    iterations_used: int
    residual: float


@dataclass(frozen=True)
class DiLapMatrix:
    matrix: sparse.csr_matrix
    weighted: bool = False

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LowRankFactors:
    """M ~= U diag(sigma) V^T; for a pseudoinverse, M^+ ~= V diag(1/sigma) U^T."""
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    rank_q: int

    def pinv_dense(self) -> np.ndarray:
        return (self.V / self.sigma) @ self.U.T

    def pinv_entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Entries (rows[k], cols[k]) of V S^-1 U^T, O(q) each."""
        return np.einsum("kq,kq->k", self.V[rows] / self.sigma, self.U[cols])


# ----- PERRON VECTOR -----
def perron_vector(p: StochasticMatrix, tol: float = settings.PERRON_TOL,
                  max_iter: int = settings.PERRON_MAX_ITER) -> PerronVector:
    """Left fixed point of P from a uniform start; stops once ||pi^T P - pi^T||_1 <= tol."""
    n = p.num_nodes
    pt = p.matrix.T.tocsr()
    pi = np.full(n, 1.0 / n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = pt @ pi
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual <= tol:
            # residual above is measured against the previous iterate; report the fixed-point one
            residual = float(np.abs(pt @ pi - pi).sum())
            if residual <= tol:
                logger.debug(f"Perron: converged after {it} iterations (residual {residual:.2e})")
                if (pi <= 0).any():
                    raise ConvergenceError("stationary distribution has non-positive entries; "
                                           "the chain is not irreducible")
                return PerronVector(pi=pi, iterations_used=it, residual=residual)
    raise ConvergenceError(f"power iteration did not reach tol={tol:g} within {max_iter} "
                           f"iterations (residual {residual:.3e}); is the graph rewired?")


# ----- DILAP -----
def dilap(g: DiGraph, p: StochasticMatrix) -> DiLapMatrix:
    """
    T = B diag({P_ij}) B^T without forming B.
    Each edge (i, j), i != j, with w = P_ij adds w to T_ii and T_jj and -w to T_ij and T_ji.
    Contributions are summed in (src, dst) order so the result does not depend on edge indices.
    """
    n = g.num_nodes
    if p.num_nodes != n:
        raise GraphError(f"transition matrix is {p.num_nodes}x{p.num_nodes}, graph has {n} nodes")
    pm = p.matrix
    if pm.nnz != g.num_edges:
        raise GraphError("transition matrix pattern does not match the graph's edges")
    w = np.asarray(pm[g.src, g.dst]).ravel()
    if (w <= 0).any():
        raise GraphError("transition matrix pattern does not match the graph's edges")

    order = np.lexsort((g.dst, g.src))
    src, dst, w = g.src[order], g.dst[order], w[order]
    real = src != dst
    src, dst, w = src[real], dst[real], w[real]

    rows = np.concatenate([src, dst, src, dst])
    cols = np.concatenate([src, dst, dst, src])
    vals = np.concatenate([w, w, -w, -w])
    t = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    t.sum_duplicates()
    t.sort_indices()
    return DiLapMatrix(matrix=t, weighted=False)


def weighted_dilap(t: DiLapMatrix, pi: PerronVector) -> DiLapMatrix:
    if pi.pi.shape[0] != t.num_nodes:
        raise GraphError("Perron vector and DiLap sizes differ")
    wt = (sparse.diags(pi.pi) @ t.matrix).tocsr()
    return DiLapMatrix(matrix=wt, weighted=True)


# ----- RANDOMIZED SVD -----
def _orthonormal_basis(y: np.ndarray) -> np.ndarray:
    q, _ = scipy.linalg.qr(y, mode="economic")
    return q


def _flip_signs(u: np.ndarray, vt: np.ndarray):
    """Make the largest-magnitude entry of every left singular vector positive."""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def randomized_truncated_svd(m: MatrixLike, q: int, oversample: int = settings.SVD_OVERSAMPLE,
                             seed: int = settings.SEED,
                             power_iters: int = settings.SVD_POWER_ITERS) -> LowRankFactors:
    """
    Rank-q SVD from a Gaussian sketch of width q + oversample.
    Only products with m (and m^T) touch the input, so cost is linear in its nonzeros.
    """
    n_rows, n_cols = m.shape
    k_max = min(n_rows, n_cols)
    if q < 1 or q > k_max:
        raise GraphError(f"rank q={q} out of range [1, {k_max}]")
    if q + oversample > k_max:
        logger.debug(f"rSVD: oversampling clamped from {oversample} to {k_max - q} (N={k_max})")
        oversample = k_max - q
    width = q + oversample

    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((n_cols, width))
    basis = _orthonormal_basis(np.asarray(m @ omega))
    for _ in range(power_iters):
        basis = _orthonormal_basis(np.asarray(m.T @ basis))
        basis = _orthonormal_basis(np.asarray(m @ basis))

    small = np.asarray(m.T @ basis).T          # width x n_cols
    u_small, s, vt = scipy.linalg.svd(small, full_matrices=False)
    u = basis @ u_small
    u, vt = _flip_signs(u[:, :q], vt[:q])
    return LowRankFactors(U=u, sigma=s[:q].copy(), V=vt.T.copy(), rank_q=q)


def pseudoinverse_factors(t: DiLapMatrix, q: int, seed: int = settings.SEED,
                          oversample: int = settings.SVD_OVERSAMPLE,
                          cutoff: float = settings.SVD_RELATIVE_CUTOFF) -> LowRankFactors:
    """Factors of T^+ ~= V S^-1 U^T; singular values under cutoff * sigma_1 are dropped."""
    f = randomized_truncated_svd(t.matrix, q, oversample=oversample, seed=seed)
    s_max = float(f.sigma[0]) if f.sigma.size else 0.0
    if s_max <= 0.0:
        raise DegenerateOperatorError("DiLap has no nonzero singular value; nothing to invert")
    keep = f.sigma >= cutoff * s_max
    if not keep.all():
        logger.debug(f"pinv: dropped {int((~keep).sum())} singular value(s) below {cutoff:g}*sigma_1")
    kept = int(keep.sum())
    logger.info(f"pinv: rank {kept} of requested {q} (sigma_1={s_max:.4g}, "
                f"sigma_min={float(f.sigma[keep][-1]):.4g})")
    return LowRankFactors(U=f.U[:, keep], sigma=f.sigma[keep], V=f.V[:, keep], rank_q=kept)


def numerical_rank(t: DiLapMatrix, cutoff: Optional[float] = None) -> int:
    """Dense rank at the inversion cutoff; small-N helper for full-rank comparisons."""
    s = scipy.linalg.svd(t.matrix.toarray(), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    cut = settings.SVD_RELATIVE_CUTOFF if cutoff is None else cutoff
    return int((s >= cut * s[0]).sum())
