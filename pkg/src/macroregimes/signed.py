"""Signed correlation networks: thresholding, SPONGE clustering, signed modularity, ARI."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .kmeans import kmeans, relabel_by_first_occurrence

SPONGE_SEED = 0


class EmptyGraphError(ValueError):
    """No edge survives thresholding."""


class SpongeConvergenceError(RuntimeError):
    pass


@dataclass
class SignedGraph:
    nodes: np.ndarray
    weights: np.ndarray
    date: object = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes)
        W = np.asarray(self.weights, dtype=float)
        if W.shape != (len(self.nodes), len(self.nodes)):
            raise ValueError("weights must be square with one row per node")
        if not np.allclose(W, W.T, rtol=0, atol=1e-12):
            raise ValueError("weights must be symmetric")
        W = (W + W.T) / 2.0
        np.fill_diagonal(W, 0.0)
        self.weights = W

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def positive(self) -> np.ndarray:
        return np.where(self.weights > 0, self.weights, 0.0)

    @property
    def negative(self) -> np.ndarray:
        return np.where(self.weights < 0, -self.weights, 0.0)


@dataclass
class Partition:
    assignment: np.ndarray
    nodes: np.ndarray = None

    def __post_init__(self):
        self.assignment = relabel_by_first_occurrence(self.assignment)
        if self.nodes is None:
            self.nodes = np.arange(len(self.assignment))
        self.nodes = np.asarray(self.nodes)
        if len(self.nodes) != len(self.assignment):
            raise ValueError("one assignment is required per node")

    @property
    def k(self) -> int:
        return int(self.assignment.max()) + 1 if len(self.assignment) else 0

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


def from_correlation(C, nodes=None, date=None) -> SignedGraph:
    """Dense signed graph carrying every off-diagonal correlation."""
    C = np.asarray(C, dtype=float)
    return SignedGraph(np.arange(len(C)) if nodes is None else nodes, C.copy(), date)


def threshold_graph(C, threshold: float = 0.2, nodes=None, date=None) -> SignedGraph:
    """Keep edges with ``|C_ij| >= threshold`` and restrict to the giant component.

    Equal-sized largest components are resolved in favour of the one holding
    the smallest node id.
    """
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    C = np.asarray(C, dtype=float)
    nodes = np.arange(len(C)) if nodes is None else np.asarray(nodes)
    W = np.where(np.abs(C) >= threshold, C, 0.0)
    np.fill_diagonal(W, 0.0)
    if not W.any():
        raise EmptyGraphError(f"{date}: no edge with |weight| >= {threshold}")
    n_comp, lab = connected_components(csr_matrix(W != 0), directed=False)
    best, best_key = None, None
    for c in range(n_comp):
        members = np.flatnonzero(lab == c)
        key = (-len(members), nodes[members].min())
        if best_key is None or key < best_key:
            best, best_key = members, key
    return SignedGraph(nodes[best], W[np.ix_(best, best)], date)


def _sym_laplacian(A):
    deg = A.sum(axis=1)
    inv = np.zeros_like(deg)
    pos = deg > 0
    inv[pos] = 1.0 / np.sqrt(deg[pos])
    return np.eye(len(A)) - inv[:, None] * A * inv[None, :]


def sponge_embedding(G: SignedGraph, k: int, tau_plus: float = 1.0, tau_minus: float = 1.0):
    """The k smallest generalised eigenpairs of (L+_sym + tau_minus I, L-_sym + tau_plus I)."""
    lhs = _sym_laplacian(G.positive) + tau_minus * np.eye(G.n)
    rhs = _sym_laplacian(G.negative) + tau_plus * np.eye(G.n)
    try:
        vals, vecs = linalg.eigh(lhs, rhs, subset_by_index=[0, k - 1])
    except linalg.LinAlgError as exc:
        raise SpongeConvergenceError(f"{G.date}: generalised eigensolver failed on {G.n} nodes: {exc}") from exc
    return vals, vecs


def sponge_sym(G: SignedGraph, k: int, tau_plus: float = 1.0, tau_minus: float = 1.0,
               seed: int = SPONGE_SEED) -> Partition:
    """Symmetric SPONGE: KMeans++ on the k smallest generalised eigenvectors.

    Each eigenvector is scaled by the inverse of its eigenvalue so the
    most informative directions dominate the embedding.
    """
    if not 2 <= k <= G.n:
        raise ValueError(f"k={k} must lie in [2, {G.n}]")
    if tau_plus <= 0 or tau_minus <= 0:
        raise ValueError("tau parameters must be positive")
    vals, vecs = sponge_embedding(G, k, tau_plus, tau_minus)
    return Partition(kmeans(vecs / vals, k, seed=seed).labels, G.nodes)


def newman_modularity(A, labels) -> float:
    """Weighted Newman modularity of a non-negative adjacency matrix (0 when it has no edges)."""
    A = np.asarray(A, dtype=float)
    two_m = A.sum()
    if two_m <= 0:
        return 0.0
    labels = np.asarray(labels)
    deg = A.sum(axis=1)
    q = 0.0
    for c in np.unique(labels):
        idx = labels == c
        q += A[np.ix_(idx, idx)].sum() / two_m - (deg[idx].sum() / two_m) ** 2
    return float(q)


def signed_modularity(G: SignedGraph, P: Partition) -> float:
    """Q+ W+/(W+ + W-) - Q- W-/(W+ + W-) over the positive and negative subgraphs."""
    labels = _labels_for(G, P)
    Ap, An = G.positive, G.negative
    wp, wn = Ap.sum() / 2.0, An.sum() / 2.0
    if wp + wn == 0:
        return 0.0
    qp = newman_modularity(Ap, labels)
    if wn == 0:
        return qp
    qn = newman_modularity(An, labels)
    return float(qp * wp / (wp + wn) - qn * wn / (wp + wn))


def _labels_for(G, P):
    labels = P.assignment if isinstance(P, Partition) else np.asarray(P)
    if isinstance(P, Partition) and not np.array_equal(P.nodes, G.nodes):
        lookup = dict(zip(P.nodes.tolist(), labels.tolist()))
        missing = [n for n in G.nodes.tolist() if n not in lookup]
        if missing:
            raise ValueError(f"partition does not cover nodes {missing}")
        labels = np.array([lookup[n] for n in G.nodes.tolist()])
    if len(labels) != G.n:
        raise ValueError("partition must cover every node of the graph")
    return labels


def select_k_by_modularity(G: SignedGraph, k_range: Sequence[int], rule: str = "max",
                           tau_plus: float = 1.0, tau_minus: float = 1.0, seed: int = SPONGE_SEED):
    """Run SPONGE for every k and pick one from the signed-modularity curve.

    ``rule="max"`` keeps the k with the highest Q_signed.
    ``rule="increase"`` keeps the k with the largest forward difference
    Q(k) - Q(k-1), the smallest k being compared with 0.
    Returns ``(k, partition, curve)``; ties go to the smaller k.
    """
    ks = sorted(set(int(k) for k in k_range if 2 <= k <= G.n))
    if not ks:
        raise ValueError(f"k_range has no value within [2, {G.n}]")
    parts, curve = {}, {}
    for k in ks:
        parts[k] = sponge_sym(G, k, tau_plus, tau_minus, seed)
        curve[k] = signed_modularity(G, parts[k])
    vals = np.array([curve[k] for k in ks])
    if len(ks) > 1 and np.ptp(vals) < 1e-6:
        warnings.warn(f"{G.date}: signed modularity is flat over k={ks}", RuntimeWarning, stacklevel=2)
    if rule == "max":
        score = vals
    elif rule == "increase":
        score = np.diff(np.concatenate([[0.0], vals]))
    else:
        raise ValueError(f"unknown rule {rule!r}")
    best = ks[int(np.argmax(score))]
    return best, parts[best], curve


# ---------------------------------------------------------------- agreement


def _align(P1, P2):
    if isinstance(P1, Partition) and isinstance(P2, Partition):
        if np.array_equal(P1.nodes, P2.nodes):
            return P1.assignment, P2.assignment
        common, i1, i2 = np.intersect1d(P1.nodes, P2.nodes, return_indices=True)
        if len(common) != len(P1.nodes) or len(common) != len(P2.nodes):
            warnings.warn(f"comparing partitions over {len(common)} common nodes", RuntimeWarning,
                          stacklevel=3)
        return P1.assignment[i1], P2.assignment[i2]
    a = P1.assignment if isinstance(P1, Partition) else np.asarray(P1)
    b = P2.assignment if isinstance(P2, Partition) else np.asarray(P2)
    if len(a) != len(b):
        raise ValueError("label vectors must have equal length")
    return a, b


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def ari(P1, P2) -> float:
    """Adjusted Rand index from the contingency table (permutation-model correction)."""
    a, b = _align(P1, P2)
    n = len(a)
    if n < 2:
        raise ValueError("ARI needs at least 2 common nodes")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(1)).sum()
    sum_b = _comb2(table.sum(0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return float((sum_ij - expected) / (top - expected))


def partition_series(stack, threshold: float = 0.2, k_range=range(2, 11), rule: str = "max",
                     threads: int = 1, seed: int = SPONGE_SEED):
    """SPONGE partition of every thresholded matrix in a stack (None where it fails)."""
    notes = []

    def one(i):
        try:
            G = threshold_graph(stack.matrices[i], threshold, stack.asset_ids, stack.end_dates[i])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                _, P, _ = select_k_by_modularity(G, k_range, rule=rule, seed=seed)
            return P, None
        except (EmptyGraphError, SpongeConvergenceError, ValueError) as exc:
            return None, f"{stack.end_dates[i]}: {exc}"

    idx = range(len(stack))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, idx))
    else:
        out = [one(i) for i in idx]
    parts = [p for p, _ in out]
    for _, msg in out:
        if msg:
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return parts, notes


def rolling_ari(partitions, lookback: int = 4) -> np.ndarray:
    """Mean ARI between each partition and the ``lookback`` preceding ones (NaN when undefined)."""
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    out = np.full(len(partitions), np.nan)
    for t in range(lookback, len(partitions)):
        cur = partitions[t]
        if cur is None:
            continue
        vals = []
        for s in range(t - lookback, t):
            prev = partitions[s]
            if prev is None:
                continue
            common = np.intersect1d(cur.nodes, prev.nodes)
            if len(common) < 2:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                vals.append(ari(cur, prev))
        if vals:
            out[t] = float(np.mean(vals))
    return out


def stability_series(stack, threshold: float = 0.2, k_range=range(2, 11), lookback: int = 4,
                     rule: str = "max", threads: int = 1, seed: int = SPONGE_SEED):
    """Community stability per window-end date.

    Returns ``(values, partitions, notes)``; the first ``lookback`` values
    are NaN, as is any date whose graph could not be clustered.
    """
    parts, notes = partition_series(stack, threshold, k_range, rule, threads, seed)
    return rolling_ari(parts, lookback), parts, notes
