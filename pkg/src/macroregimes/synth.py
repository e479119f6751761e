"""Synthetic panels with planted regimes, signed communities and lead-lag chains."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import AssetClass, AssetMeta, ReturnsPanel

class NotPositiveDefiniteError(ValueError):
    def __init__(self, regime, min_eig, suggestion):
        super().__init__(
            f"regime {regime}: target correlation is not positive definite "
            f"(smallest eigenvalue {min_eig:.3g}); the nearest PD correlation matrix "
            "is attached as .suggestion"
        )
        self.suggestion = suggestion


@dataclass(frozen=True)
class BlockSpec:
    """Block correlation: ``within`` inside a block, ``between[a][b]`` (or a scalar) across."""

    assignment: tuple
    within: float = 0.6
    between: object = 0.0

    def matrix(self) -> np.ndarray:
        a = np.asarray(self.assignment)
        nb = a.max() + 1
        B = np.full((nb, nb), self.between, dtype=float) if np.isscalar(self.between) \
            else np.asarray(self.between, dtype=float)
        C = B[a[:, None], a[None, :]]
        C[a[:, None] == a[None, :]] = self.within
        np.fill_diagonal(C, 1.0)
        return C


def business_days(n: int, start: dt.date = dt.date(2000, 1, 3)) -> tuple:
    days = np.busday_offset(np.datetime64(start), np.arange(n), roll="forward")
    return tuple(d.astype(object) for d in days)


def default_assets(n: int, classes: Sequence[str] | None = None) -> tuple:
    if classes is None:
        classes = [AssetClass.EQUITY] * n
    return tuple(
        AssetMeta(i, f"A{i:03d}", c,
                  "simple_difference" if AssetClass(c) is AssetClass.INTEREST_RATE else "percent_change")
        for i, c in enumerate(classes)
    )


def nearest_correlation(C) -> np.ndarray:
    """Eigenvalue-clipped, rescaled correlation matrix close to ``C``."""
    w, V = np.linalg.eigh((C + C.T) / 2.0)
    A = (V * np.maximum(w, 1e-6)) @ V.T
    d = np.sqrt(np.diag(A))
    A = A / d[:, None] / d[None, :]
    np.fill_diagonal(A, 1.0)
    return A


def _cholesky(C, regime):
    w = np.linalg.eigvalsh(C)
    if w.min() <= 1e-10:
        raise NotPositiveDefiniteError(regime, w.min(), nearest_correlation(C))
    return np.linalg.cholesky(C)


def random_block_specs(K: int, N: int, n_blocks: int = 3, within: float = 0.6, between: float = -0.2,
                       seed: int = 0) -> list[BlockSpec]:
    """K block structures over N assets with a different random asset-to-block map each."""
    rng = np.random.default_rng(seed)
    base = np.arange(N) % n_blocks
    return [BlockSpec(tuple(rng.permutation(base).tolist()), within, between) for _ in range(K)]


def planted_regime_panel(K: int, N: int, dates_per_regime, block_specs=None, seed: int = 0,
                         sequence: Sequence[int] | None = None, scale: float = 0.01,
                         classes: Sequence[str] | None = None):
    """Gaussian returns whose correlation switches between regimes over time.

    ``dates_per_regime`` is one length per segment of ``sequence`` (default
    one segment per regime, in order) or a single length for all. Each
    entry of ``block_specs`` is a BlockSpec or an explicit correlation
    matrix. Returns ``(panel, truth)`` with one regime id per row.
    """
    if block_specs is None:
        block_specs = random_block_specs(K, N, seed=seed + 7919)
    if len(block_specs) != K:
        raise ValueError("one block spec is required per regime")
    sequence = list(range(K)) if sequence is None else list(sequence)
    lengths = [dates_per_regime] * len(sequence) if np.isscalar(dates_per_regime) else list(dates_per_regime)
    if len(lengths) != len(sequence):
        raise ValueError("one length is required per regime segment")
    chols = []
    for r, spec in enumerate(block_specs):
        C = spec.matrix() if isinstance(spec, BlockSpec) else np.asarray(spec, dtype=float)
        if C.shape != (N, N):
            raise ValueError(f"regime {r}: correlation must be {N}x{N}")
        chols.append(_cholesky(C, r))
    rng = np.random.default_rng(seed)
    blocks, truth = [], []
    for r, n in zip(sequence, lengths):
        Z = rng.standard_normal((n, N))
        blocks.append(scale * Z @ chols[r].T)
        truth += [r] * n
    values = np.vstack(blocks)
    panel = ReturnsPanel(business_days(len(values)), values, default_assets(N, classes))
    return panel, np.array(truth)


@dataclass
class LeadLagTruth:
    labels: np.ndarray
    order: list
    lag: int
    edges: list


def planted_leadlag_panel(clusters: Sequence[int], lag: int, coupling: float, noise: float, T: int = 750,
                          seed: int = 0, scale: float = 0.01, classes: Sequence[str] | None = None):
    """Chain of clusters: each cluster follows the previous one's mean return ``lag`` days later.

    Cluster 0 members are a shared unit-variance factor plus ``noise``;
    members of cluster c+1 are ``coupling`` times cluster c's mean return
    ``lag`` rows earlier, plus ``noise``. Returns ``(panel, truth)``.
    """
    if not 0 < coupling <= 1:
        raise ValueError("coupling must lie in (0, 1]")
    if lag < 1:
        raise ValueError("lag must be >= 1")
    rng = np.random.default_rng(seed)
    sizes = list(clusters)
    n = sum(sizes)
    burn = lag * len(sizes)
    total = T + burn
    X = np.zeros((total, n))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    f = rng.standard_normal(total)
    prev_mean = None
    for c, size in enumerate(sizes):
        idx = np.flatnonzero(labels == c)
        eps = noise * rng.standard_normal((total, size))
        if c == 0:
            X[:, idx] = f[:, None] + eps
        else:
            shifted = np.zeros(total)
            shifted[lag:] = prev_mean[:-lag]
            X[:, idx] = coupling * shifted[:, None] + eps
        prev_mean = X[:, idx].mean(axis=1)
    X = scale * X[burn:]
    edges = [(int(i), int(j)) for c in range(len(sizes) - 1)
             for i in np.flatnonzero(labels == c) for j in np.flatnonzero(labels == c + 1)]
    if classes is None:
        cyc = [AssetClass.EQUITY, AssetClass.FIXED_INCOME, AssetClass.COMMODITY, AssetClass.CURRENCY]
        classes = [cyc[c % len(cyc)] for c in labels]
    panel = ReturnsPanel(business_days(T), X, default_assets(n, classes))
    return panel, LeadLagTruth(labels, list(range(len(sizes))), lag, edges)


def signed_sbm(n: int, k: int, p_in_pos: float = 0.8, p_out_neg: float = 0.8, p_in_neg: float = 0.0,
               p_out_pos: float = 0.0, seed: int = 0):
    """Signed stochastic block model with unit weights and near-equal blocks.

    Returns ``(W, labels)`` with labels in contiguous blocks.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) * k // n
    same = labels[:, None] == labels[None, :]
    U = rng.random((n, n))
    V = rng.random((n, n))
    W = np.zeros((n, n))
    W[same & (U < p_in_pos)] = 1.0
    W[same & (U >= p_in_pos) & (V < p_in_neg)] = -1.0
    W[~same & (U < p_out_neg)] = -1.0
    W[~same & (U >= p_out_neg) & (V < p_out_pos)] = 1.0
    W = np.triu(W, 1)
    return W + W.T, labels


def planted_flow_matrix(sizes: Sequence[int], flows: Sequence[tuple], strength: float = 1.0,
                        noise: float = 0.0, seed: int = 0):
    """Skew-symmetric lead-lag matrix with every edge from block a to block b for (a, b) in flows."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    M = np.zeros((n, n))
    for a, b in flows:
        M[np.ix_(labels == a, labels == b)] = strength
    M = M - M.T
    if noise:
        E = np.triu(noise * rng.standard_normal((n, n)), 1)
        M = M + E - E.T
    return M, labels
