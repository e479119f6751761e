"""Slow reference implementations for cross-checking the fast kernels.

Everything here is written with plain loops and shares no code with the
rest of the package. Sizes are limited; these are for tests only.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _sign(v) -> int:
    return int(v > 0) - int(v < 0)


def kendall_pairs(x, y) -> float:
    """(concordant - discordant) / number of pairs, by enumerating all pairs."""
    n = len(x)
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += _sign(x[i] - x[j]) * _sign(y[i] - y[j])
    return s / (n * (n - 1) / 2)


def weighted_kendall_pairs(x, y, weights) -> float:
    """Pair (i, j) counts with weight weights[i] + weights[j]; normalised by the total weight."""
    n = len(x)
    s = total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            w = weights[i] + weights[j]
            s += w * _sign(x[i] - x[j]) * _sign(y[i] - y[j])
            total += w
    return s / total


def hyperbolic_pair_weights(n: int) -> list:
    """1/(r+1) for recency rank r, with the newest observation (last) at rank 0."""
    return [1.0 / (n - i) for i in range(n)]


def betweenness_paths(D, rtol: float = 1e-10) -> list:
    """Normalised betweenness by listing every shortest path (small graphs only).

    ``D`` holds edge lengths; zero or negative means no edge.
    """
    n = len(D)
    nbrs = [[j for j in range(n) if j != i and D[i][j] > 0] for i in range(n)]

    def all_paths(s, t):
        best = [math.inf]
        found = []

        def walk(v, seen, length, path):
            if length > best[0] * (1 + rtol) + 1e-300:
                return
            if v == t:
                if length < best[0] * (1 - rtol):
                    best[0] = length
                    found.clear()
                found.append((length, list(path)))
                return
            for u in nbrs[v]:
                if u not in seen:
                    seen.add(u)
                    path.append(u)
                    walk(u, seen, length + D[v][u], path)
                    path.pop()
                    seen.discard(u)

        walk(s, {s}, 0.0, [s])
        return [p for L, p in found if L <= best[0] * (1 + rtol)]

    bc = [0.0] * n
    for s in range(n):
        for t in range(s + 1, n):
            paths = all_paths(s, t)
            if not paths:
                continue
            for p in paths:
                for v in p[1:-1]:
                    bc[v] += 1.0 / len(paths)
    if n > 2:
        bc = [b * 2.0 / ((n - 1) * (n - 2)) for b in bc]
    return bc


def _modularity_loop(A, labels) -> float:
    n = len(A)
    deg = [sum(A[i][j] for j in range(n)) for i in range(n)]
    two_m = sum(deg)
    if two_m == 0:
        return 0.0
    q = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += A[i][j] - deg[i] * deg[j] / two_m
    return q / two_m


def signed_modularity_loop(W, labels) -> float:
    """Q+ W+/(W+ + W-) - Q- W-/(W+ + W-) with W+- the total positive/negative mass."""
    n = len(W)
    Ap = [[max(W[i][j], 0.0) for j in range(n)] for i in range(n)]
    An = [[max(-W[i][j], 0.0) for j in range(n)] for i in range(n)]
    wp = sum(map(sum, Ap))
    wn = sum(map(sum, An))
    if wp + wn == 0:
        return 0.0
    return (_modularity_loop(Ap, labels) * wp - _modularity_loop(An, labels) * wn) / (wp + wn)


def set_partitions(n: int):
    """Restricted growth strings of length n (every set partition once)."""
    def grow(prefix, m):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for c in range(m + 2):
            yield from grow(prefix + [c], max(m, c))

    if n == 0:
        yield ()
        return
    yield from grow([0], 0)


def best_signed_partition(W, k: int | None = None):
    """Exhaustive maximiser of signed modularity, optionally with exactly k blocks."""
    n = len(W)
    if n > 10:
        raise ValueError("exhaustive search is limited to n <= 10")
    best, best_q = None, -math.inf
    for p in set_partitions(n):
        if k is not None and max(p) + 1 != k:
            continue
        q = signed_modularity_loop(W, p)
        if q > best_q + 1e-12:
            best, best_q = p, q
    return best, best_q


def ari_pairs(a, b) -> float:
    """Adjusted Rand index by counting agreeing pairs."""
    n = len(a)
    both = only_a = only_b = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        both += sa and sb
        only_a += sa and not sb
        only_b += sb and not sa
    total = n * (n - 1) / 2
    pa, pb = both + only_a, both + only_b
    expected = pa * pb / total
    top = (pa + pb) / 2
    if top == expected:
        return 1.0
    return (both - expected) / (top - expected)


def v_measure_loop(clusters, classes, beta: float = 1.0) -> float:
    """Homogeneity/completeness from explicit conditional entropies."""
    n = len(clusters)
    ks, cs = sorted(set(clusters)), sorted(set(classes))
    cnt = {(c, k): 0 for c in cs for k in ks}
    for c, k in zip(classes, clusters):
        cnt[c, k] += 1
    n_c = {c: sum(cnt[c, k] for k in ks) for c in cs}
    n_k = {k: sum(cnt[c, k] for c in cs) for k in ks}
    H_C = -sum(n_c[c] / n * math.log(n_c[c] / n) for c in cs)
    H_K = -sum(n_k[k] / n * math.log(n_k[k] / n) for k in ks)
    H_C_K = -sum(cnt[c, k] / n * math.log(cnt[c, k] / n_k[k]) for c in cs for k in ks if cnt[c, k])
    H_K_C = -sum(cnt[c, k] / n * math.log(cnt[c, k] / n_c[c]) for c in cs for k in ks if cnt[c, k])
    h = 1.0 if H_C == 0 else 1 - H_C_K / H_C
    c = 1.0 if H_K == 0 else 1 - H_K_C / H_K
    if beta * h + c == 0:
        return 0.0
    return (1 + beta) * h * c / (beta * h + c)


def cophenetic_from_linkage(Z, n: int) -> np.ndarray:
    """Merge height of the lowest common ancestor for every leaf pair."""
    members = {i: [i] for i in range(n)}
    out = np.zeros((n, n))
    for step, row in enumerate(Z):
        a, b, h = int(row[0]), int(row[1]), float(row[2])
        for i in members[a]:
            for j in members[b]:
                out[i, j] = out[j, i] = h
        members[n + step] = members.pop(a) + members.pop(b)
    return out
