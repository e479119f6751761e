"""Time-similarity of correlation structure, PCA embedding and KMeans regime labelling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import cophenet, linkage
from scipy.spatial.distance import squareform

from .correlation import CorrelationStack, WindowSpec, windowed_stack
from .ingest import ReturnsPanel
from .kmeans import kmeans, relabel_by_first_occurrence
from .signed import ari


class SimilarityKind(str, Enum):
    COPHENETIC = "cophenetic"
    METACORRELATION = "metacorrelation"


@dataclass
class TimeSimilarityMatrix:
    dates: tuple
    values: np.ndarray
    kind: SimilarityKind
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = SimilarityKind(self.kind)
        self.dates = tuple(self.dates)


@dataclass
class Embedding:
    """Dates projected onto the leading principal axes of a similarity matrix."""

    points: np.ndarray
    components: np.ndarray
    mean: np.ndarray
    explained_variance_ratio: np.ndarray
    dims: int

    @property
    def explained_variance(self) -> float:
        return float(self.explained_variance_ratio[: self.dims].sum())

    def reconstruct(self) -> np.ndarray:
        return self.points @ self.components + self.mean


@dataclass
class RegimeLabeling:
    dates: tuple
    labels: np.ndarray
    K: int
    embedding_dims: int = 0
    explained_variance: float = float("nan")
    inertia_curve: dict = field(default_factory=dict)
    end_rows: np.ndarray = None

    def __post_init__(self):
        self.dates = tuple(self.dates)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.labels) != len(self.dates):
            raise ValueError("one label is required per date")
        if self.labels.min() < 0 or self.labels.max() >= self.K:
            raise ValueError("labels must lie in 0..K-1")
        if len(np.unique(self.labels)) != self.K:
            raise ValueError("every regime id must be used at least once")

    def members(self, regime_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == regime_id)


# ---------------------------------------------------------------- distances


def to_distance(C) -> np.ndarray:
    """``sqrt(2 (1 - |C|))`` with an exact zero diagonal."""
    C = np.asarray(C, dtype=float)
    D = np.sqrt(np.maximum(2.0 * (1.0 - np.abs(C)), 0.0))
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class Dendrogram:
    """Average-linkage merge tree in the usual (n-1) x 4 linkage layout."""

    linkage: np.ndarray
    n_leaves: int

    @property
    def heights(self) -> np.ndarray:
        return self.linkage[:, 2]

    def cophenetic(self) -> np.ndarray:
        """Condensed cophenetic distances (merge height of each pair's lowest common ancestor)."""
        return cophenet(self.linkage)


def average_linkage_dendrogram(D) -> Dendrogram:
    D = np.asarray(D, dtype=float)
    if D.shape[0] != D.shape[1] or not np.allclose(D, D.T) or np.any(np.diag(D) != 0) or D.min() < 0:
        raise ValueError("D must be a symmetric non-negative matrix with zero diagonal")
    condensed = squareform(D, checks=False)
    return Dendrogram(linkage(condensed, method="average"), D.shape[0])


def _zscore_rows(A):
    mu = A.mean(axis=1, keepdims=True)
    sd = A.std(axis=1, keepdims=True)
    bad = sd[:, 0] <= 1e-15 * np.maximum(1.0, np.abs(mu[:, 0]))
    Z = np.divide(A - mu, sd, out=np.zeros_like(A), where=~bad[:, None])
    return Z, bad


def cophenetic_similarity(stack: CorrelationStack) -> TimeSimilarityMatrix:
    """Cophenetic correlation between dates, measured in both directions and averaged.

    For dates a, b the Pearson correlation of a's cophenetic distances with
    b's condensed distances is averaged with the reverse pairing. The
    diagonal is each date's own cophenetic correlation.
    """
    if len(stack) < 2:
        raise ValueError("at least 2 correlation matrices are required")
    dists, cophs = [], []
    for M in stack.matrices:
        D = to_distance(M)
        dists.append(squareform(D, checks=False))
        cophs.append(average_linkage_dendrogram(D).cophenetic())
    zd, bad_d = _zscore_rows(np.array(dists))
    zc, bad_c = _zscore_rows(np.array(cophs))
    m = zd.shape[1]
    A = np.clip(zc @ zd.T / m, -1.0, 1.0)
    S = (A + A.T) / 2.0
    np.fill_diagonal(S, np.diag(A))
    notes = []
    bad = bad_d | bad_c
    if bad.any():
        S[bad, :] = np.nan
        S[:, bad] = np.nan
        for i in np.flatnonzero(bad):
            msg = f"{stack.end_dates[i]}: degenerate (all-equal) distances, similarity set missing"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return TimeSimilarityMatrix(stack.end_dates, S, SimilarityKind.COPHENETIC, notes)


def metacorrelation_similarity(stack: CorrelationStack) -> TimeSimilarityMatrix:
    """Pearson correlation between the flattened upper triangles of every pair of dates."""
    if len(stack) < 2:
        raise ValueError("at least 2 correlation matrices are required")
    iu = np.triu_indices(stack.N, k=1)
    V = stack.matrices[:, iu[0], iu[1]]
    Z, bad = _zscore_rows(V)
    if bad.any():
        raise ValueError(f"constant correlation structure on {stack.end_dates[np.flatnonzero(bad)[0]]}")
    S = np.clip(Z @ Z.T / V.shape[1], -1.0, 1.0)
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return TimeSimilarityMatrix(stack.end_dates, S, SimilarityKind.METACORRELATION)


def time_similarity(stack: CorrelationStack, kind) -> TimeSimilarityMatrix:
    if SimilarityKind(kind) is SimilarityKind.COPHENETIC:
        return cophenetic_similarity(stack)
    return metacorrelation_similarity(stack)


# ---------------------------------------------------------------- embedding


def pca_embed(S, dims: int | None = None, variance_target: float | None = None) -> Embedding:
    """Project each row (one date) of ``S`` onto its leading principal axes.

    Exactly one of ``dims`` (component count) and ``variance_target``
    (smallest count whose cumulative explained variance reaches the target)
    should be given. Component signs are fixed so the largest-magnitude
    loading of each axis is positive.
    """
    X = np.asarray(getattr(S, "values", S), dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("similarity matrix contains missing or non-finite values")
    if (dims is None) == (variance_target is None):
        raise ValueError("give exactly one of dims and variance_target")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    var = s**2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    tol = s.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
    rank = int((s > tol).sum())
    if variance_target is not None:
        if not 0 < variance_target <= 1:
            raise ValueError("variance_target must lie in (0, 1]")
        cum = np.cumsum(ratio)
        dims = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    if dims < 1:
        raise ValueError("dims must be >= 1")
    if dims > max(rank, 1):
        warnings.warn(f"requested {dims} dims but the matrix has rank {rank}; clamped", RuntimeWarning,
                      stacklevel=2)
        dims = max(rank, 1)
    comps = Vt[:dims].copy()
    flip = np.sign(comps[np.arange(dims), np.abs(comps).argmax(axis=1)])
    flip[flip == 0] = 1.0
    comps *= flip[:, None]
    points = (X - mean) @ comps.T
    return Embedding(points, comps, mean, ratio, dims)


# ---------------------------------------------------------------- clustering


def elbow_k(inertia: dict, candidates=None) -> int:
    """K with the largest discrete second difference of the inertia curve.

    Only candidates (default: every K on the curve) with both neighbours on
    the curve are eligible; ties go to the smaller K. With no eligible K the
    smallest candidate is returned.
    """
    ks = sorted(inertia if candidates is None else candidates)
    if len(ks) == 1:
        return ks[0]
    best, best_val = None, -np.inf
    for k in ks:
        if k - 1 in inertia and k + 1 in inertia:
            val = inertia[k - 1] - 2.0 * inertia[k] + inertia[k + 1]
            if val > best_val + 1e-12 * max(1.0, abs(best_val) if np.isfinite(best_val) else 1.0):
                best, best_val = k, val
    return ks[0] if best is None else best


def kmeans_regimes(points, K_range: Sequence[int], seed: int = 0, dates=None, K: int | None = None,
                   n_init: int = 10) -> RegimeLabeling:
    """Cluster embedded dates for every K in ``K_range`` and keep the elbow (or ``K``).

    Labels are renumbered by first appearance in time.
    """
    emb = points if isinstance(points, Embedding) else None
    X = np.asarray(emb.points if emb else points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    K_range = sorted(set(int(k) for k in K_range))
    if not K_range or K_range[0] < 2 or K_range[-1] >= n:
        raise ValueError(f"K_range must lie within [2, {n})")
    inertia = {}
    fits = {}
    if K_range[0] - 1 >= 1:
        inertia[K_range[0] - 1] = float(((X - X.mean(0)) ** 2).sum()) if K_range[0] == 2 else \
            kmeans(X, K_range[0] - 1, seed=seed, n_init=n_init).inertia
    for k in K_range:
        fits[k] = kmeans(X, k, seed=seed, n_init=n_init)
        inertia[k] = fits[k].inertia
    chosen = K if K is not None else elbow_k(inertia, K_range)
    if chosen not in fits:
        fits[chosen] = kmeans(X, chosen, seed=seed, n_init=n_init)
        inertia[chosen] = fits[chosen].inertia
    labels = relabel_by_first_occurrence(fits[chosen].labels)
    if dates is None:
        dates = tuple(range(n))
    curve = {k: inertia[k] for k in sorted(inertia)}
    return RegimeLabeling(
        dates, labels, int(labels.max()) + 1,
        emb.dims if emb else X.shape[1],
        emb.explained_variance if emb else float("nan"),
        curve,
    )


def detect_regimes(panel: ReturnsPanel, spec: WindowSpec, kind="metacorrelation", dims=None,
                   variance_target=0.9, K_range=range(2, 11), seed=0, K=None, threads=1,
                   stack: CorrelationStack | None = None):
    """Window correlations, time similarity, PCA and KMeans in one call.

    Returns ``(labeling, stack, similarity, embedding)``.
    """
    if stack is None:
        stack = windowed_stack(panel, spec, threads=threads)
    S = time_similarity(stack, kind)
    if dims is not None:
        variance_target = None
    emb = pca_embed(S, dims=dims, variance_target=variance_target)
    labeling = kmeans_regimes(emb, K_range, seed=seed, dates=stack.end_dates, K=K)
    labeling.end_rows = stack.end_rows
    return labeling, stack, S, emb


# ---------------------------------------------------------------- stability


@dataclass(frozen=True)
class Perturbation:
    name: str
    seed: int | None = None
    window_length: int | None = None
    dims: int | None = None
    K: int | None = None


def default_perturbations(base_seed: int, spec: WindowSpec, base: RegimeLabeling) -> list[Perturbation]:
    out = [Perturbation("identity")]
    out += [Perturbation(f"seed={base_seed + i}", seed=base_seed + i) for i in (1, 2)]
    for f in (0.8, 1.2):
        out.append(Perturbation(f"window={int(round(spec.length * f))}",
                                window_length=max(3, int(round(spec.length * f)))))
    if base.embedding_dims:
        out += [Perturbation(f"dims={d}", dims=d) for d in (base.embedding_dims - 1, base.embedding_dims + 1)
                if d >= 1]
    out += [Perturbation(f"K={k}", K=k) for k in (base.K - 1, base.K + 1) if k >= 2]
    return out


def _asof_align(base_dates, other_dates, other_labels):
    """Label of the latest ``other`` window ending on or before each base date."""
    other = np.array([d.toordinal() if hasattr(d, "toordinal") else d for d in other_dates])
    mine = np.array([d.toordinal() if hasattr(d, "toordinal") else d for d in base_dates])
    pos = np.searchsorted(other, mine, side="right") - 1
    ok = (pos >= 0) & (mine <= other[-1])
    return ok, np.asarray(other_labels)[np.clip(pos, 0, None)]


def stability_report(panel: ReturnsPanel, spec: WindowSpec, base: RegimeLabeling,
                     perturbations: Sequence[Perturbation], kind="metacorrelation",
                     K_range=range(2, 11), seed=0, variance_target=0.9, threads=1) -> list[dict]:
    """ARI between the base labelling and each perturbed rerun.

    When a perturbation changes the window length the end dates differ; each
    base date is then compared with the latest perturbed window ending on or
    before it, over the span both runs cover.
    """
    rows = []
    for p in perturbations:
        s = replace(spec, length=p.window_length) if p.window_length else spec
        dims = p.dims if p.dims is not None else (base.embedding_dims or None)
        vt = None if dims is not None else variance_target
        lab, *_ = detect_regimes(panel, s, kind=kind, dims=dims, variance_target=vt,
                                 K_range=K_range, seed=p.seed if p.seed is not None else seed,
                                 K=p.K if p.K is not None else base.K, threads=threads)
        ok, aligned = _asof_align(base.dates, lab.dates, lab.labels)
        score = ari(base.labels[ok], aligned[ok]) if ok.sum() >= 2 else float("nan")
        rows.append({"perturbation": p.name, "ari": score, "n_dates": int(ok.sum())})
    return rows
