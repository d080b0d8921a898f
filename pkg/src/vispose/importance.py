"""Visibility-aware keypoint importance via Personalized PageRank.

A directed k-NN graph over the keypoints gives a column-stochastic transition
matrix ``T = A.T / k``. Restarting uniformly at visible keypoints, the
stationary distribution ``r = c T r + (1 - c) s`` has the closed form
``r = T_ppr s`` with ``T_ppr = (1 - c) (I - c T)^-1``, which depends only on
the object and is computed once.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

DEFAULT_DAMPING = 0.85


class NumericalError(RuntimeError):
    pass


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class KnnGraph:
    n: int
    k: int
    adjacency: np.ndarray
    transition: np.ndarray
    ppr_matrix: Optional[np.ndarray] = None
    damping: Optional[float] = None

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(self.adjacency)
        return list(zip(i.tolist(), j.tolist()))

    def edge_list_text(self) -> str:
        return "".join(f"{i} {j}\n" for i, j in self.edges())


def knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """(n, k) nearest-neighbour indices; equal distances resolve to the lower index."""
    P = np.asarray(points, dtype=np.float64)
    n = len(P)
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    if np.any(d2 == 0):
        raise ValueError("duplicate points")
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def build_knn_graph(points, k: int) -> KnnGraph:
    nbrs = knn_indices(points, k)
    n = len(nbrs)
    A = np.zeros((n, n), dtype=np.int8)
    A[np.repeat(np.arange(n), k), nbrs.ravel()] = 1
    T = A.T.astype(np.float64) / k
    return KnnGraph(n, k, _ro(A), _ro(T))


def graph_from_adjacency(A, k: Optional[int] = None) -> KnnGraph:
    """Wrap an explicit out-regular adjacency (rows sum to ``k``, no self-edges)."""
    A = np.asarray(A, dtype=np.int8)
    deg = A.sum(axis=1)
    k = int(deg[0]) if k is None else k
    if np.any(deg != k) or np.any(np.diag(A)):
        raise ValueError("adjacency must be k-out-regular without self-edges")
    return KnnGraph(len(A), k, _ro(A), _ro(A.T.astype(np.float64) / k))


def precompute_ppr(graph: KnnGraph, c: float = DEFAULT_DAMPING) -> KnnGraph:
    if not 0.0 < c < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    M = np.eye(graph.n) - c * graph.transition
    rhs = (1.0 - c) * np.eye(graph.n)
    X = scipy.linalg.lu_solve(scipy.linalg.lu_factor(M), rhs)
    residual = np.abs(M @ X - rhs).max()
    if residual > 1e-8:
        raise NumericalError(f"PPR solve residual {residual:.3e} exceeds 1e-8")
    return dataclasses.replace(graph, ppr_matrix=_ro(X), damping=float(c))


def restart_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=bool)
    n_vis = int(v.sum())
    if n_vis == 0:
        raise ValueError("empty restart support")
    return v / n_vis


def importance(graph: KnnGraph, s) -> np.ndarray:
    if graph.ppr_matrix is None:
        raise ValueError("graph has no precomputed PPR matrix")
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (graph.n,):
        raise ValueError(f"restart vector has shape {s.shape}, expected ({graph.n},)")
    return graph.ppr_matrix @ s


def power_iteration_ppr(graph: KnnGraph, s, c: float = DEFAULT_DAMPING, tol: float = 1e-13, max_iters: int = 100_000):
    """Fixed-point iteration ``r <- c T r + (1 - c) s`` from ``r = s``.

    Returns ``(r, iterations)``; stops once the L1 change drops below ``tol``.
    Kept as an independent check on :func:`importance`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.asarray(s, dtype=np.float64)
    T = graph.transition
    r = s.copy()
    for it in range(1, max_iters + 1):
        nxt = c * (T @ r) + (1.0 - c) * s
        delta = np.abs(nxt - r).sum()
        r = nxt
        if delta < tol:
            return r, it
    raise NumericalError(f"power iteration did not converge in {max_iters} iterations")


def importance_to_json(r) -> str:
    return json.dumps(np.asarray(r, dtype=np.float64).tolist())
