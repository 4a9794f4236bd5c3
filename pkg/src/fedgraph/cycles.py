"""Temporal cycle enumeration on a transaction multigraph.

A temporal cycle is a closed walk v0 -> v1 -> ... -> v0 over distinct vertices
whose edge timestamps strictly increase from the first edge to the last, with
last - first <= window. Each cycle is found once, from its earliest edge.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BudgetExceeded, ValidationError

DEFAULT_MAX_LEN = 5
DEFAULT_WINDOW = 30 * 86_400
DEFAULT_BUDGET = 10**7


def _cyclic_edges(src: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    """Mask of edges inside a strongly connected component of size >= 2."""
    if len(src) == 0:
        return np.zeros(0, dtype=bool)
    adj = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n)).tocsr()
    _, comp = connected_components(adj, directed=True, connection="strong")
    return (comp[src] == comp[dst]) & (src != dst)


def temporal_cycle_counts(
    src: np.ndarray,
    dst: np.ndarray,
    timestamp: np.ndarray,
    n: int,
    max_len: int = DEFAULT_MAX_LEN,
    window: int = DEFAULT_WINDOW,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """Per-vertex number of temporal cycles of length <= max_len through it."""
    if max_len < 2:
        raise ValidationError(f"max_len must be >= 2, got {max_len}")
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    timestamp = np.asarray(timestamp, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    keep = _cyclic_edges(src, dst, n)
    if not keep.any():
        return counts
    s, d, t = src[keep], dst[keep], timestamp[keep]

    # out-edges per vertex, sorted by timestamp
    order = np.lexsort((t, s))
    s, d, t = s[order], d[order], t[order]
    starts = np.searchsorted(s, np.arange(n + 1))
    out_d = d.tolist()
    out_t = t.tolist()
    bounds = starts.tolist()

    explored = 0
    path: list[int] = []
    on_path = set()

    def extend(v: int, last_t: int, limit_t: int, origin: int) -> None:
        nonlocal explored
        lo = bounds[v]
        hi = bounds[v + 1]
        # first out-edge strictly after last_t
        a, b = lo, hi
        while a < b:
            mid = (a + b) // 2
            if out_t[mid] <= last_t:
                a = mid + 1
            else:
                b = mid
        for k in range(a, hi):
            tk = out_t[k]
            if tk > limit_t:
                break
            w = out_d[k]
            explored += 1
            if explored > budget:
                raise BudgetExceeded(explored, budget)
            if w == origin:
                for u in path:
                    counts[u] += 1
            elif w not in on_path and len(path) < max_len:
                path.append(w)
                on_path.add(w)
                extend(w, tk, limit_t, origin)
                path.pop()
                on_path.discard(w)

    for e in range(len(s)):
        origin, first, t0 = int(s[e]), int(d[e]), int(t[e])
        explored += 1
        if explored > budget:
            raise BudgetExceeded(explored, budget)
        path[:] = [origin, first]
        on_path.clear()
        on_path.update(path)
        extend(first, t0, t0 + window, origin)
    return counts


def temporal_cycles(graph, max_len: int = DEFAULT_MAX_LEN, window: int = DEFAULT_WINDOW, budget: int = DEFAULT_BUDGET):
    """Cycle participation count per vertex of a TransactionGraph."""
    return temporal_cycle_counts(graph.src, graph.dst, graph.timestamp, graph.n_vertices, max_len, window, budget)
