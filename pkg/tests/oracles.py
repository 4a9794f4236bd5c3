"""Slow, obviously-correct reference implementations used as test oracles.

Each one is written independently of the package code it checks: plain
Python loops, dense matrices, exhaustive enumeration.
"""

from __future__ import annotations

import itertools
import math
import unicodedata
from collections import deque

import numpy as np


# ---------------------------------------------------------------- entity resolution


def _norm(text):
    if not text:
        return ""
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


def _norm_num(text):
    return _norm(text).replace(" ", "").replace("-", "")


def profiles_match(a, b) -> bool:
    """The exact-match rule evaluated directly on one pair of identities."""
    x, y = a.identity, b.identity
    if x.kind != y.kind:
        return False
    if x.kind.value == "Individual":
        nat = _norm(x.nationality)
        if nat and nat == _norm(y.nationality):
            name = _norm(x.full_name)
            if name and name == _norm(y.full_name) and x.date_of_birth and x.date_of_birth == y.date_of_birth:
                return True
            dx, dy = x.id_document, y.id_document
            if dx and dy and dx.doc_type and dx.doc_type == dy.doc_type and _norm_num(dx.doc_number) and _norm_num(dx.doc_number) == _norm_num(dy.doc_number):
                return True
        return False
    country = _norm(x.country_of_incorporation)
    if country and country == _norm(y.country_of_incorporation):
        name = _norm(x.full_name)
        if name and name == _norm(y.full_name) and x.date_of_incorporation and x.date_of_incorporation == y.date_of_incorporation:
            return True
        rx, ry = x.company_registration, y.company_registration
        if rx and ry and rx.reg_type and rx.reg_type == ry.reg_type and _norm_num(rx.reg_number) and _norm_num(rx.reg_number) == _norm_num(ry.reg_number):
            return True
    return False


def pairwise_partition(profiles, ref) -> set[frozenset[str]]:
    """O(n^2) match graph, then BFS components."""
    n = len(profiles)
    adj = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if profiles_match(profiles[i], profiles[j]):
                adj[i].append(j)
                adj[j].append(i)
    seen = [False] * n
    parts = set()
    for s in range(n):
        if seen[s]:
            continue
        comp, queue = [], deque([s])
        seen[s] = True
        while queue:
            v = queue.popleft()
            comp.append(ref(profiles[v]))
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        parts.add(frozenset(comp))
    return parts


# ---------------------------------------------------------------- components


def union_find_labels(n: int, edges) -> list[int]:
    """Weak components by union-find; label = smallest vertex in the component."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = [find(v) for v in range(n)]
    smallest: dict[int, int] = {}
    for v, r in enumerate(roots):
        smallest.setdefault(r, v)
    return [smallest[r] for r in roots]


# ---------------------------------------------------------------- temporal cycles


def brute_force_cycle_counts(edges, n: int, max_len: int, window: int) -> list[int]:
    """Every simple cycle up to ``max_len`` vertices, every choice of parallel
    edges, checked for strictly increasing times within the window.

    A cycle is a vertex sequence (v0..vk-1) up to rotation; each rotation is
    tried as the starting edge, so a cycle counts once per valid timing.
    """
    by_pair: dict[tuple[int, int], list[int]] = {}
    for s, d, t in edges:
        if s != d:
            by_pair.setdefault((s, d), []).append(t)
    counts = [0] * n
    for k in range(2, max_len + 1):
        for seq in itertools.permutations(range(n), k):
            if seq[0] != min(seq):
                continue  # canonical rotation: smallest vertex first
            hops = [(seq[i], seq[(i + 1) % k]) for i in range(k)]
            if any(h not in by_pair for h in hops):
                continue
            total = 0
            for r in range(k):
                rotated = hops[r:] + hops[:r]
                for times in itertools.product(*(by_pair[h] for h in rotated)):
                    if all(times[i] < times[i + 1] for i in range(k - 1)) and times[-1] - times[0] <= window:
                        total += 1
            for v in seq:
                counts[v] += total
    return counts


# ---------------------------------------------------------------- PageRank


def dense_pagerank(edges, n: int, damping: float = 0.85, iters: int = 1000) -> np.ndarray:
    """Dense Google matrix; dangling vertices jump uniformly."""
    m = np.zeros((n, n))
    for s, d in edges:
        m[d, s] += 1.0
    out = m.sum(axis=0)
    for j in range(n):
        if out[j] == 0:
            m[:, j] = 1.0 / n
        else:
            m[:, j] /= out[j]
    g = damping * m + (1 - damping) / n
    x = np.full(n, 1.0 / n)
    for _ in range(iters):
        x = g @ x
    return x / x.sum()


# ---------------------------------------------------------------- transaction statistics


def streaming_stats(values) -> dict[str, float]:
    """Welford's one-pass mean and variance; population std."""
    count, mean, m2 = 0, 0.0, 0.0
    lo, hi, total = math.inf, -math.inf, 0.0
    for x in values:
        count += 1
        delta = x - mean
        mean += delta / count
        m2 += delta * (x - mean)
        lo, hi, total = min(lo, x), max(hi, x), total + x
    if count == 0:
        return {"count": 0, "min": 0.0, "max": 0.0, "mean": 0.0, "std": 0.0, "sum": 0.0}
    return {"count": count, "min": lo, "max": hi, "mean": mean, "std": math.sqrt(m2 / count), "sum": total}


# ---------------------------------------------------------------- egonets


def bfs_egonet_count(adj: dict[int, set[int]], center: int, hops: int, flagged: set[int]) -> int:
    dist = {center: 0}
    queue = deque([center])
    while queue:
        v = queue.popleft()
        if dist[v] == hops:
            continue
        for w in adj.get(v, ()):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return sum(1 for v in dist if v != center and v in flagged)


# ---------------------------------------------------------------- neural network


def _sig(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def naive_forward(weights, biases, row) -> float:
    """Scalar loops over every unit of every layer."""
    a = [float(v) for v in row]
    for w, b in zip(weights, biases):
        nxt = []
        for i in range(len(b)):
            z = float(b[i])
            for j in range(len(a)):
                z += float(w[i][j]) * a[j]
            nxt.append(_sig(z))
        a = nxt
    return a[0]


def naive_bce(weights, biases, x, y, clamp=1e-12) -> float:
    total = 0.0
    for row, label in zip(x, y):
        p = min(max(naive_forward(weights, biases, row), clamp), 1 - clamp)
        total += -(label * math.log(p) + (1 - label) * math.log(1 - p))
    return total / len(y)


def finite_difference_grad(loss_fn, arrays, eps: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``loss_fn(arrays)`` w.r.t. every entry."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + eps
            up = loss_fn(arrays)
            a[idx] = old - eps
            down = loss_fn(arrays)
            a[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads
