"""Granger lead-lag matrices, Hermitian clustering of directed flow, and v-measure scoring."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .kmeans import kmeans
from .signed import Partition

LAG_GRID = (1, 5, 10, 16, 21, 42)
ALPHA = 0.05


class NoLeadLagError(ValueError):
    """The lead-lag matrix carries no significant relation."""


@dataclass
class GrangerResult:
    significant: bool
    strength: float
    p_value: float
    f_stat: float


@dataclass
class LeadLagMatrix:
    lag: int
    strengths: np.ndarray
    alpha: float = ALPHA
    p_values: np.ndarray = None
    warnings: list = field(default_factory=list)

    @property
    def n_relations(self) -> int:
        """Number of asset pairs with a (deflated) significant direction."""
        return int(np.count_nonzero(np.triu(self.strengths, 1)))

    def edges(self):
        """(leader, lagger, strength) for every positive entry, row-major."""
        return [(int(i), int(j), float(self.strengths[i, j])) for i, j in np.argwhere(self.strengths > 0)]


@dataclass
class LeadLagClustering:
    partition: Partition
    ordering: list
    v_score: float = float("nan")
    beta: float = 1.0
    lag: int | None = None
    net_outflow: np.ndarray = None
    v_curve: dict = field(default_factory=dict)

    @property
    def leading(self) -> np.ndarray:
        return self.partition.members(self.ordering[0])

    @property
    def lagging(self) -> np.ndarray:
        return self.partition.members(self.ordering[-1])


# ---------------------------------------------------------------- Granger


def _lags(v, lag):
    n = len(v)
    return np.column_stack([v[lag - k - 1 : n - k - 1] for k in range(lag)])


def _rss(A, b):
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    r = b - A @ coef
    return float(r @ r), rank


def granger_pair(x, y, lag: int, alpha: float = ALPHA) -> GrangerResult:
    """F-test of whether lags 1..lag of ``x`` improve an autoregression of ``y``.

    ``strength`` is 1 - p. A rank-deficient full model (e.g. ``x`` equal
    to ``y``) is reported as not significant, with a warning.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("x and y must have equal length")
    if lag < 1:
        raise ValueError("lag must be positive")
    if len(y) < 4 * lag + 10:
        raise ValueError(f"series of length {len(y)} is too short for lag {lag} (need {4 * lag + 10})")
    target = y[lag:]
    ones = np.ones((len(target), 1))
    restricted = np.hstack([ones, _lags(y, lag)])
    full = np.hstack([restricted, _lags(x, lag)])
    rss_r, _ = _rss(restricted, target)
    rss_f, rank = _rss(full, target)
    if rank < full.shape[1]:
        warnings.warn(f"singular Granger regression at lag {lag}; treated as not significant",
                      RuntimeWarning, stacklevel=2)
        return GrangerResult(False, 0.0, 1.0, float("nan"))
    df = len(target) - full.shape[1]
    if rss_f <= 0:
        f_stat, p = math.inf, 0.0
    else:
        f_stat = max((rss_r - rss_f) / lag, 0.0) / (rss_f / df)
        p = float(stats.f.sf(f_stat, lag, df))
    return GrangerResult(p < alpha, 1.0 - p, p, float(f_stat))


def benjamini_hochberg(p, alpha: float = ALPHA) -> np.ndarray:
    """Boolean mask of discoveries at false-discovery rate ``alpha``."""
    p = np.asarray(p, dtype=float)
    flat = p.ravel()
    ok = np.isfinite(flat)
    order = np.argsort(np.where(ok, flat, np.inf), kind="stable")
    m = ok.sum()
    thresh = alpha * np.arange(1, len(flat) + 1) / max(m, 1)
    passed = np.where(ok[order], flat[order] <= thresh, False)
    mask = np.zeros(len(flat), dtype=bool)
    if passed.any():
        last = np.flatnonzero(passed).max()
        mask[order[: last + 1]] = True
    return mask.reshape(p.shape)


def leadlag_matrix(segment, lag: int, alpha: float = ALPHA, fdr: bool = False,
                   threads: int = 1) -> LeadLagMatrix:
    """Skew-symmetric matrix of deflated significant Granger strengths at one lag.

    Entry (i, j) > 0 means i leads j. When both directions of a pair are
    significant only the stronger survives, at the difference of the two
    strengths. ``fdr=True`` replaces the raw ``alpha`` cut with a
    Benjamini-Hochberg selection over all directed tests.
    """
    X = np.asarray(getattr(segment, "values", segment), dtype=float)
    n = X.shape[1]
    notes = []
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]

    def one(pair):
        i, j = pair
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = granger_pair(X[:, i], X[:, j], lag, alpha)
        return res.p_value, [str(w.message) for w in caught]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    P = np.full((n, n), np.nan)
    for (i, j), (p, msgs) in zip(pairs, results):
        P[i, j] = p
        notes += [f"pair ({i}, {j}): {m}" for m in msgs]
    sig = benjamini_hochberg(P, alpha) if fdr else np.nan_to_num(P, nan=1.0) < alpha
    strength = np.where(sig, 1.0 - np.nan_to_num(P, nan=1.0), 0.0)
    M = strength - strength.T
    return LeadLagMatrix(lag, M, alpha, P, notes)


def optimal_lag(segment, lag_grid: Sequence[int] = LAG_GRID, alpha: float = ALPHA, fdr: bool = False,
                threads: int = 1):
    """Lag with the most significant (post-deflation) relations; ties go to the smaller lag.

    Lags too long for the segment are skipped with a warning. Returns
    ``(lag, counts, matrices)``.
    """
    X = np.asarray(getattr(segment, "values", segment), dtype=float)
    if not lag_grid:
        raise ValueError("lag grid is empty")
    counts, mats = {}, {}
    for g in sorted(set(lag_grid)):
        if len(X) < 4 * g + 10:
            warnings.warn(f"segment of {len(X)} rows too short for lag {g}; skipped", RuntimeWarning,
                          stacklevel=2)
            continue
        mats[g] = leadlag_matrix(X, g, alpha, fdr, threads)
        counts[g] = mats[g].n_relations
    if not counts:
        raise ValueError(f"segment of {len(X)} rows is too short for every lag in {sorted(lag_grid)}")
    best = max(counts, key=lambda g: (counts[g], -g))
    return best, counts, mats


# ---------------------------------------------------------------- clustering


def hermitian_embedding(M, n_vectors: int):
    """Leading eigenpairs of the Hermitian matrix i*M, as real features.

    Eigenvalues of i*M come in +/- pairs whose eigenvectors are complex
    conjugates, so only the largest positive ones are used. Each vector is
    scaled by its eigenvalue and split into real and imaginary parts.
    """
    M = np.asarray(M, dtype=float)
    H = 1j * M
    vals, vecs = np.linalg.eigh(H)
    idx = np.argsort(vals)[::-1][:n_vectors]
    V = vecs[:, idx] * vals[idx]
    return np.hstack([V.real, V.imag]), vals[idx]


def net_outflow(M, assignment) -> np.ndarray:
    """Sum of M from each cluster to the rest of the graph."""
    M = np.asarray(M)
    assignment = np.asarray(assignment)
    k = assignment.max() + 1
    return np.array([M[np.ix_(assignment == c, assignment != c)].sum() for c in range(k)])


def hermitian_cluster(M, k: int, seed: int = 0, lag: int | None = None, nodes=None) -> LeadLagClustering:
    """Cluster a skew-symmetric lead-lag matrix by flow pattern.

    Uses ceil(k/2) eigenvectors of i*M and KMeans++; clusters are ordered
    from largest to smallest net outflow (most leading first).
    """
    if isinstance(M, LeadLagMatrix):
        lag = M.lag if lag is None else lag
        M = M.strengths
    M = np.asarray(M, dtype=float)
    n = len(M)
    if not 2 <= k <= n:
        raise ValueError(f"k={k} must lie in [2, {n}]")
    if not np.any(M):
        raise NoLeadLagError("no significant lead-lag structure")
    if not np.allclose(M, -M.T):
        raise ValueError("lead-lag matrix must be skew-symmetric")
    feats, _ = hermitian_embedding(M, math.ceil(k / 2))
    part = Partition(kmeans(feats, k, seed=seed).labels, nodes)
    flow = net_outflow(M, part.assignment)
    ordering = sorted(range(part.k), key=lambda c: (-flow[c], c))
    return LeadLagClustering(part, ordering, lag=lag, net_outflow=flow)


def _entropy(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def homogeneity_completeness(clusters, classes) -> tuple[float, float]:
    clusters = np.asarray(clusters)
    classes = np.asarray(classes)
    if len(clusters) != len(classes):
        raise ValueError("one class label is required per node")
    _, ci = np.unique(classes, return_inverse=True)
    _, ki = np.unique(clusters, return_inverse=True)
    table = np.zeros((ci.max() + 1, ki.max() + 1))
    np.add.at(table, (ci, ki), 1.0)
    n = table.sum()
    h_class = _entropy(table.sum(1))
    h_clust = _entropy(table.sum(0))
    nz = table > 0
    col = table.sum(0, keepdims=True)
    row = table.sum(1, keepdims=True)
    h_class_given = float(-(table[nz] / n * np.log((table / col)[nz])).sum())
    h_clust_given = float(-(table[nz] / n * np.log((table / row)[nz])).sum())
    hom = 1.0 if h_class == 0 else 1.0 - h_class_given / h_class
    comp = 1.0 if h_clust == 0 else 1.0 - h_clust_given / h_clust
    return hom, comp


def v_measure(partition, class_labels, beta: float = 1.0) -> float:
    """(1+beta) h c / (beta h + c) for homogeneity h and completeness c against class labels."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    clusters = partition.assignment if isinstance(partition, Partition) else partition
    h, c = homogeneity_completeness(clusters, class_labels)
    if beta * h + c == 0:
        return 0.0
    return float((1.0 + beta) * h * c / (beta * h + c))


def select_k_by_vmeasure(M, class_labels, k_range: Sequence[int], beta: float = 1.0, seed: int = 0,
                         lag: int | None = None, nodes=None) -> LeadLagClustering:
    """Hermitian clustering for each k; keep the best v-measure (ties to the smaller k)."""
    n = len(M.strengths if isinstance(M, LeadLagMatrix) else M)
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 2 or ks[-1] > n:
        raise ValueError(f"k_range must lie within [2, {n}]")
    best, curve = None, {}
    for k in ks:
        res = hermitian_cluster(M, k, seed=seed, lag=lag, nodes=nodes)
        res.v_score = v_measure(res.partition, class_labels, beta)
        res.beta = beta
        curve[k] = res.v_score
        if best is None or res.v_score > best.v_score + 1e-12:
            best = res
    best.v_curve = curve
    return best


@dataclass
class RegimeLeadLag:
    regime_id: int
    lag: int
    counts: dict
    matrix: LeadLagMatrix
    clustering: LeadLagClustering


def regime_leadlag(segment, class_labels, lag_grid=LAG_GRID, k_range=range(2, 11), beta: float = 1.0,
                   alpha: float = ALPHA, fdr: bool = False, seed: int = 0, regime_id: int = 0,
                   threads: int = 1, nodes=None) -> RegimeLeadLag:
    """Optimal lag, lead-lag matrix and v-measure-selected Hermitian clustering for one regime."""
    g, counts, mats = optimal_lag(segment, lag_grid, alpha, fdr, threads)
    M = mats[g]
    n = M.strengths.shape[0]
    ks = [k for k in k_range if 2 <= k <= n]
    clustering = select_k_by_vmeasure(M, class_labels, ks, beta, seed, lag=g, nodes=nodes)
    return RegimeLeadLag(regime_id, g, counts, M, clustering)
