"""KMeans++ seeding with Lloyd iterations, shared by every clustering step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITER = 300
SHIFT_TOL = 1e-8


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def _sq_dist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(X, k, rng):
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dist(X, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[c] = X[idx]
        closest = np.minimum(closest, _sq_dist(X, centers[c : c + 1])[:, 0])
    return centers


def _lloyd(X, centers, max_iter, tol):
    k = len(centers)
    for it in range(1, max_iter + 1):
        d = _sq_dist(X, centers)
        labels = d.argmin(1)
        new = np.empty_like(centers)
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = X[members].mean(0)
            else:
                # re-seed an emptied centroid at the point farthest from its own centre
                far = d[np.arange(len(X)), labels].argmax()
                new[c] = X[far]
                labels[far] = c
        shift = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if shift < tol:
            break
    d = _sq_dist(X, centers)
    labels = d.argmin(1)
    inertia = float(((X - centers[labels]) ** 2).sum())
    return labels, centers, inertia, it


def kmeans(X, k, seed=0, n_init=10, max_iter=MAX_ITER, tol=SHIFT_TOL) -> KMeansResult:
    """Best of ``n_init`` KMeans++ restarts by inertia. Deterministic given ``seed``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must lie in [1, {len(X)}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = kmeans_pp_init(X, k, rng)
        labels, centers, inertia, it = _lloyd(X, centers, max_iter, tol)
        if best is None or inertia < best.inertia - 1e-12 * max(1.0, abs(best.inertia)):
            best = KMeansResult(labels, centers, inertia, it)
    return best


def relabel_by_first_occurrence(labels) -> np.ndarray:
    """Map cluster ids to 0, 1, ... in order of first appearance."""
    labels = np.asarray(labels)
    mapping = {}
    for v in labels.tolist():
        if v not in mapping:
            mapping[v] = len(mapping)
    return np.array([mapping[v] for v in labels.tolist()], dtype=int)
