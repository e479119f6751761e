"""Per-regime summaries: average correlation, asset-class statistics, centrality, communities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .correlation import CorrelationStack
from .ingest import ReturnsPanel
from .regimes import RegimeLabeling, to_distance
from .signed import Partition, from_correlation, select_k_by_modularity

ANNUALIZATION = 252


@dataclass
class ClassStats:
    mean_return: float
    std: float
    sharpe: float
    n_assets: int


@dataclass
class RegimeProfile:
    regime_id: int
    avg_corr: np.ndarray
    avg_corr_scalar: float
    avg_abs_corr_scalar: float
    class_stats: dict = field(default_factory=dict)
    betweenness_ranking: list = field(default_factory=list)
    communities: Partition = None
    community_curve: dict = field(default_factory=dict)
    intercluster_sign: np.ndarray = None


def regime_average_corr(stack: CorrelationStack, labels: RegimeLabeling, regime_id: int) -> np.ndarray:
    """Entrywise mean of the regime's member matrices, unit diagonal."""
    members = labels.members(regime_id)
    if len(members) == 0:
        raise ValueError(f"regime {regime_id} has no member windows")
    M = stack.matrices[members].mean(axis=0)
    M = (M + M.T) / 2.0
    np.fill_diagonal(M, 1.0)
    return np.clip(M, -1.0, 1.0)


def off_diagonal_means(M) -> tuple[float, float]:
    """(mean correlation, mean absolute correlation) over off-diagonal entries."""
    M = np.asarray(M)
    iu = np.triu_indices(len(M), k=1)
    v = M[iu]
    return float(v.mean()), float(np.abs(v).mean())


def regime_row_map(n_rows: int, end_rows, labels, stride: int) -> np.ndarray:
    """Regime id per panel row; -1 for rows owned by no window.

    Window w owns the rows after the previous window's end up to its own
    end; the first window owns the ``stride`` rows ending at its end row.
    """
    out = np.full(n_rows, -1, dtype=int)
    end_rows = np.asarray(end_rows)
    labels = np.asarray(labels)
    prev = end_rows[0] - stride
    for e, lab in zip(end_rows, labels):
        out[max(prev + 1, 0) : e + 1] = lab
        prev = e
    return out


def class_statistics(panel: ReturnsPanel, row_regimes, annualization: int = ANNUALIZATION) -> dict:
    """Per regime and asset class: mean asset mean, mean asset std, and ret/std*sqrt(annualization)."""
    row_regimes = np.asarray(row_regimes)
    classes = np.array(panel.asset_classes)
    out = {}
    for r in sorted(set(row_regimes.tolist()) - {-1}):
        X = panel.values[row_regimes == r]
        stats = {}
        for c in dict.fromkeys(classes.tolist()):
            cols = X[:, classes == c]
            ret = float(cols.mean(axis=0).mean())
            sd = float(cols.std(axis=0, ddof=1).mean()) if len(cols) > 1 else float("nan")
            # rounding noise on a constant series counts as zero spread
            flat = not sd > 1e-14 * max(1.0, abs(ret))
            sharpe = float("nan") if flat else ret / sd * np.sqrt(annualization)
            stats[c] = ClassStats(ret, sd, float(sharpe), cols.shape[1])
        out[r] = stats
    return out


def betweenness_centrality(D, rtol: float = 1e-10) -> np.ndarray:
    """Normalised weighted betweenness on a distance matrix (0 entries = no edge).

    Shortest paths are counted with Brandes' pair-dependency accumulation;
    path lengths within ``rtol`` of each other count as ties. Values are
    scaled by 2 / ((n-1)(n-2)) for an undirected graph of n nodes.
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    adj = D > 0
    dist = dijkstra(np.where(adj, D, 0.0), directed=False)
    bc = np.zeros(n)
    for s in range(n):
        d = dist[s]
        reach = np.flatnonzero(np.isfinite(d))
        order = reach[np.argsort(d[reach], kind="stable")]
        # pred[u, v]: u precedes v on some shortest path from s
        with np.errstate(invalid="ignore"):
            slack = d[:, None] + np.where(adj, D, np.inf) - d[None, :]
        pred = adj & (np.abs(slack) <= rtol * np.maximum(1.0, d[None, :]))
        pred[:, s] = False
        sigma = np.zeros(n)
        sigma[s] = 1.0
        for v in order[1:]:
            sigma[v] = sigma[pred[:, v]].sum()
        delta = np.zeros(n)
        for v in order[::-1]:
            if v == s:
                continue
            us = np.flatnonzero(pred[:, v])
            delta[us] += sigma[us] / sigma[v] * (1.0 + delta[v])
            bc[v] += delta[v]
    bc /= 2.0
    if n > 2:
        bc *= 2.0 / ((n - 1) * (n - 2))
    return bc


def betweenness_ranking(avg_corr, names=None) -> list[tuple]:
    """Assets ordered by betweenness on the distance graph sqrt(2(1-|C|)); ties keep input order."""
    bc = betweenness_centrality(to_distance(avg_corr))
    names = list(range(len(bc))) if names is None else list(names)
    order = sorted(range(len(bc)), key=lambda i: (-bc[i], i))
    return [(names[i], float(bc[i])) for i in order]


def intercluster_sign(C, assignment) -> np.ndarray:
    """Sign of the mean correlation between members of each pair of clusters.

    Diagonal blocks use off-diagonal entries only; a singleton cluster's
    diagonal is 0.
    """
    C = np.asarray(C)
    assignment = np.asarray(assignment)
    k = assignment.max() + 1
    S = np.zeros((k, k), dtype=int)
    for a in range(k):
        ia = assignment == a
        for b in range(k):
            ib = assignment == b
            block = C[np.ix_(ia, ib)]
            if a == b:
                m = ia.sum()
                if m < 2:
                    continue
                mean = (block.sum() - np.trace(block)) / (m * (m - 1))
            else:
                mean = block.mean()
            S[a, b] = int(np.sign(mean))
    return S


def regime_communities(avg_corr, k_range=range(2, 16), nodes=None, rule: str = "max"):
    """SPONGE on the dense regime-average signed graph.

    Returns ``(partition, intercluster_sign, modularity_curve)``.
    """
    G = from_correlation(avg_corr, nodes)
    _, P, curve = select_k_by_modularity(G, k_range, rule=rule)
    return P, intercluster_sign(avg_corr, P.assignment), curve


def profile_regimes(panel: ReturnsPanel, stack: CorrelationStack, labels: RegimeLabeling,
                    k_range=range(2, 16), annualization: int = ANNUALIZATION, rule: str = "max",
                    top: int | None = None) -> list[RegimeProfile]:
    rows = regime_row_map(panel.T, stack.end_rows, labels.labels, stack.spec.stride)
    stats = class_statistics(panel, rows, annualization)
    names = [a.name for a in panel.assets]
    out = []
    for r in range(labels.K):
        M = regime_average_corr(stack, labels, r)
        avg, avg_abs = off_diagonal_means(M)
        ranking = betweenness_ranking(M, names)
        P, signs, curve = regime_communities(M, k_range, stack.asset_ids, rule)
        out.append(RegimeProfile(r, M, avg, avg_abs, stats.get(r, {}),
                                 ranking[:top] if top else ranking, P, curve, signs))
    return out


def export_profiles(profiles, directory, panel: ReturnsPanel) -> Path:
    directory = Path(directory)
    names = [a.name for a in panel.assets]
    classes = panel.asset_classes
    with (directory / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "avg_corr", "avg_abs_corr", "k"])
        for p in profiles:
            w.writerow([p.regime_id, f"{p.avg_corr_scalar:.12g}", f"{p.avg_abs_corr_scalar:.12g}", p.communities.k])
    for p in profiles:
        d = directory / f"regime_{p.regime_id}"
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / "avg_corr.csv", p.avg_corr, delimiter=",", fmt="%.12g",
                   header=",".join(names), comments="")
        with (d / "class_stats.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["asset_class", "n_assets", "mean_return", "std", "sharpe"])
            for c, s in p.class_stats.items():
                w.writerow([c, s.n_assets, f"{s.mean_return:.12g}", f"{s.std:.12g}", f"{s.sharpe:.12g}"])
        with (d / "betweenness.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "asset", "centrality"])
            for i, (a, c) in enumerate(p.betweenness_ranking, start=1):
                w.writerow([i, a, f"{c:.12g}"])
        with (d / "communities.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["asset_id", "asset", "asset_class", "cluster"])
            for i, c in enumerate(p.communities.assignment):
                w.writerow([int(p.communities.nodes[i]), names[i], classes[i], int(c)])
        np.savetxt(d / "intercluster_sign.csv", p.intercluster_sign, delimiter=",", fmt="%d")
    return directory
