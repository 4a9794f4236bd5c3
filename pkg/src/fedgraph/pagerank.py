"""PageRank by power iteration over a sparse transition matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import EmptyInput


@dataclass(frozen=True)
class PageRankResult:
    scores: np.ndarray
    iterations: int
    converged: bool
    delta: float


def transition_matrix(src: np.ndarray, dst: np.ndarray, n: int) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Column-stochastic P^T (as CSR, rows = targets) and the dangling-vertex mask.

    Parallel edges collapse into one edge weighted by multiplicity.
    """
    w = sparse.coo_matrix((np.ones(len(src)), (src, dst)), shape=(n, n)).tocsr()
    w.sum_duplicates()
    out = np.asarray(w.sum(axis=1)).ravel()
    dangling = out == 0
    inv = np.zeros(n)
    inv[~dangling] = 1.0 / out[~dangling]
    return (sparse.diags(inv) @ w).T.tocsr(), dangling


def pagerank_edges(
    src: np.ndarray,
    dst: np.ndarray,
    n: int,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> PageRankResult:
    if n <= 0:
        raise EmptyInput("pagerank needs at least one vertex")
    pt, dangling = transition_matrix(np.asarray(src), np.asarray(dst), n)
    x = np.full(n, 1.0 / n)
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        nxt = damping * (pt @ x + x[dangling].sum() / n) + (1.0 - damping) / n
        nxt /= nxt.sum()
        delta = float(np.abs(nxt - x).sum())
        x = nxt
        if delta < tol:
            break
    return PageRankResult(x, it, delta < tol, delta)


def pagerank(graph, damping: float = 0.85, tol: float = 1e-8, max_iter: int = 100) -> PageRankResult:
    """Scores per vertex of a TransactionGraph, in vertex order."""
    return pagerank_edges(graph.src, graph.dst, graph.n_vertices, damping, tol, max_iter)
