"""Pairwise correlation kernels and sliding-window correlation stacks."""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .ingest import ReturnsPanel

STACK_FORMAT_VERSION = 1


class UndefinedCorrelationError(ValueError):
    """A correlation was requested for a constant series."""


class Method(str, Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"
    KENDALL = "kendall"
    WEIGHTED_KENDALL = "weighted_kendall"


@dataclass(frozen=True)
class WindowSpec:
    length: int
    stride: int = 1
    method: Method = Method.WEIGHTED_KENDALL

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.length < 3:
            raise ValueError(f"window length must be >= 3, got {self.length}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    def ratio_warning(self, n_assets: int) -> str | None:
        """Advisory message when the window is shorter than the asset count."""
        if self.length / n_assets < 1:
            return (
                f"window length {self.length} is shorter than the asset count "
                f"{n_assets} (l/N = {self.length / n_assets:.2f}; about 2 is advised)"
            )
        return None


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    if len(x) < 3:
        raise ValueError("at least 3 joint observations are required")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    # rescale so tiny magnitudes do not underflow in the products
    dx /= np.abs(dx).max()
    dy /= np.abs(dy).max()
    r = np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    return float(np.clip(r, -1.0, 1.0))


def spearman(x, y) -> float:
    """Rank correlation ``1 - 6 sum(d^2) / (l (l^2 - 1))`` with average ranks for ties."""
    x, y = _check_pair(x, y)
    n = len(x)
    d = rankdata(x) - rankdata(y)
    rho = 1.0 - 6.0 * np.dot(d, d) / (n * (n * n - 1.0))
    return float(np.clip(rho, -1.0, 1.0))


def _exchange_weight(y, a):
    """Total weight of strict inversions in ``y``; an inversion (i, j) costs a_i + a_j.

    Bottom-up merge sort. Equal values are never exchanged.
    """
    vals = list(y)
    wts = list(a)
    n = len(vals)
    total = 0.0
    width = 1
    while width < n:
        out_v, out_w = [], []
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j = lo, mid
            left_w = sum(wts[lo:mid])
            while i < mid and j < hi:
                if vals[i] <= vals[j]:
                    out_v.append(vals[i])
                    out_w.append(wts[i])
                    left_w -= wts[i]
                    i += 1
                else:
                    # vals[j] jumps over every remaining left element
                    total += (mid - i) * wts[j] + left_w
                    out_v.append(vals[j])
                    out_w.append(wts[j])
                    j += 1
            out_v.extend(vals[i:mid])
            out_w.extend(wts[i:mid])
            out_v.extend(vals[j:hi])
            out_w.extend(wts[j:hi])
        vals, wts = out_v, out_w
        width *= 2
    return total


def _tie_weight(keys, a) -> float:
    """Sum of (a_i + a_j) over pairs sharing the same key."""
    groups: dict = {}
    for k, w in zip(keys, a):
        cnt, s = groups.get(k, (0, 0.0))
        groups[k] = (cnt + 1, s + w)
    return sum((cnt - 1) * s for cnt, s in groups.values() if cnt > 1)


def _kendall_core(x, y, a) -> float:
    order = np.lexsort((y, x))
    xs, ys, ws = x[order], y[order], a[order]
    total = (len(x) - 1) * float(ws.sum())
    disc = _exchange_weight(ys.tolist(), ws.tolist())
    tx = _tie_weight(xs.tolist(), ws.tolist())
    ty = _tie_weight(ys.tolist(), ws.tolist())
    txy = _tie_weight(list(zip(xs.tolist(), ys.tolist())), ws.tolist())
    conc = total - tx - ty + txy - disc
    return float(np.clip((conc - disc) / total, -1.0, 1.0))


def kendall(x, y) -> float:
    """Concordant minus discordant pairs over all pairs; tied pairs count in the denominator."""
    x, y = _check_pair(x, y)
    return _kendall_core(x, y, np.ones(len(x)))


def default_recency_ranks(length: int) -> np.ndarray:
    """Rank 0 for the latest observation, increasing into the past."""
    return np.arange(length - 1, -1, -1)


def hyperbolic_weights(recency_ranks) -> np.ndarray:
    return 1.0 / (np.asarray(recency_ranks, dtype=float) + 1.0)


def _check_ranks(ranks, n):
    ranks = np.asarray(ranks)
    if ranks.shape != (n,) or not np.array_equal(np.sort(ranks), np.arange(n)):
        raise ValueError("recency_ranks must be a permutation of 0..l-1")
    return ranks


def weighted_kendall(x, y, recency_ranks=None) -> float:
    """Kendall statistic where exchanging elements of recency ranks r, s weighs 1/(r+1) + 1/(s+1).

    Normalised by the total weighted pair mass so perfect (anti)concordance
    gives +1 (-1). ``recency_ranks`` defaults to 0 for the last observation.
    """
    x, y = _check_pair(x, y)
    if recency_ranks is None:
        recency_ranks = default_recency_ranks(len(x))
    ranks = _check_ranks(recency_ranks, len(x))
    return _kendall_core(x, y, hyperbolic_weights(ranks))


KERNELS = {
    Method.PEARSON: pearson,
    Method.SPEARMAN: spearman,
    Method.KENDALL: kendall,
    Method.WEIGHTED_KENDALL: weighted_kendall,
}


# ---------------------------------------------------------------- matrices

_PAIR_CHUNK = 16384


def _sign_correlation(X, pair_weight=None):
    """All-columns Kendall-type statistic from pairwise sign products."""
    l = X.shape[0]
    iu, ju = np.triu_indices(l, k=1)
    w = np.ones(len(iu)) if pair_weight is None else pair_weight
    num = np.zeros((X.shape[1], X.shape[1]))
    for s in range(0, len(iu), _PAIR_CHUNK):
        sl = slice(s, s + _PAIR_CHUNK)
        S = np.sign(X[iu[sl]] - X[ju[sl]])
        num += S.T @ (S * w[sl, None])
    return num / w.sum()


def correlation_matrix(X, method=Method.PEARSON, recency_ranks=None):
    """N x N correlation of the columns of ``X`` (l x N); columns must be non-constant."""
    method = Method(method)
    X = np.asarray(X, dtype=float)
    l = X.shape[0]
    if method is Method.PEARSON:
        C = np.corrcoef(X, rowvar=False)
    elif method is Method.SPEARMAN:
        R = rankdata(X, axis=0)
        sq = (R * R).sum(axis=0)
        d2 = sq[:, None] + sq[None, :] - 2.0 * R.T @ R
        C = 1.0 - 6.0 * d2 / (l * (l * l - 1.0))
    elif method is Method.KENDALL:
        C = _sign_correlation(X)
    else:
        if recency_ranks is None:
            recency_ranks = default_recency_ranks(l)
        a = hyperbolic_weights(_check_ranks(recency_ranks, l))
        iu, ju = np.triu_indices(l, k=1)
        C = _sign_correlation(X, a[iu] + a[ju])
    C = np.clip((C + C.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def _window_matrix(X, method):
    const = np.all(X == X[0], axis=0)
    C = np.zeros((X.shape[1], X.shape[1]))
    live = np.flatnonzero(~const)
    if len(live) > 1:
        C[np.ix_(live, live)] = correlation_matrix(X[:, live], method)
    np.fill_diagonal(C, 1.0)
    return C, np.flatnonzero(const)


@dataclass
class CorrelationStack:
    end_dates: tuple
    matrices: np.ndarray
    spec: WindowSpec
    asset_ids: np.ndarray = None
    end_rows: np.ndarray = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.end_dates = tuple(self.end_dates)
        self.matrices = np.asarray(self.matrices, dtype=float)
        n = self.matrices.shape[1]
        if self.asset_ids is None:
            self.asset_ids = np.arange(n)
        self.asset_ids = np.asarray(self.asset_ids)
        if len(self.end_dates) != len(self.matrices):
            raise ValueError("one end date is required per matrix")
        if any(b <= a for a, b in zip(self.end_dates, self.end_dates[1:])):
            raise ValueError("end dates must be strictly increasing")

    def __len__(self):
        return len(self.matrices)

    @property
    def N(self) -> int:
        return self.matrices.shape[1]

    def subset(self, index) -> "CorrelationStack":
        index = np.asarray(index)
        rows = None if self.end_rows is None else self.end_rows[index]
        return CorrelationStack(
            tuple(self.end_dates[i] for i in index), self.matrices[index], self.spec,
            self.asset_ids, rows,
        )

    def save(self, directory) -> Path:
        """Write one CSV per window-end date plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for d, M in zip(self.end_dates, self.matrices):
            name = f"corr_{_date_str(d)}.csv"
            np.savetxt(directory / name, M, delimiter=",", fmt="%.17g",
                       header=",".join(map(str, self.asset_ids)), comments="")
            files.append(name)
        manifest = {
            "format_version": STACK_FORMAT_VERSION,
            "window": {"length": self.spec.length, "stride": self.spec.stride,
                       "method": self.spec.method.value},
            "asset_ids": [int(a) for a in self.asset_ids],
            "end_dates": [_date_str(d) for d in self.end_dates],
            "end_rows": None if self.end_rows is None else [int(r) for r in self.end_rows],
            "files": files,
            "warnings": list(self.warnings),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return directory

    @classmethod
    def load(cls, directory) -> "CorrelationStack":
        import datetime as dt

        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("format_version") != STACK_FORMAT_VERSION:
            raise ValueError(f"unsupported stack format {manifest.get('format_version')}")
        mats = np.stack(
            [np.loadtxt(directory / f, delimiter=",", skiprows=1, ndmin=2) for f in manifest["files"]]
        )
        dates = tuple(dt.date.fromisoformat(d) for d in manifest["end_dates"])
        rows = manifest.get("end_rows")
        return cls(dates, mats, WindowSpec(**manifest["window"]),
                   np.array(manifest["asset_ids"]),
                   None if rows is None else np.array(rows), list(manifest["warnings"]))


def _date_str(d) -> str:
    return d.isoformat() if hasattr(d, "isoformat") else str(d)


def window_starts(T: int, spec: WindowSpec) -> np.ndarray:
    if T < spec.length:
        raise ValueError(f"panel has {T} rows, fewer than the window length {spec.length}")
    return np.arange(0, T - spec.length + 1, spec.stride)


def windowed_stack(panel: ReturnsPanel, spec: WindowSpec, threads: int = 1) -> CorrelationStack:
    """Correlation matrix of every sliding window over the panel.

    A column that is constant inside a window gets zero correlation with
    every other column for that window, and a warning is recorded.
    """
    starts = window_starts(panel.T, spec)
    X = panel.values

    def one(s):
        return _window_matrix(X[s : s + spec.length], spec.method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, starts))
    else:
        results = [one(s) for s in starts]

    notes = []
    for s, (_, const) in zip(starts, results):
        if len(const):
            end = panel.dates[s + spec.length - 1]
            names = [panel.assets[c].name for c in const]
            msg = f"{_date_str(end)}: constant column(s) {names} set to zero correlation"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    ends = starts + spec.length - 1
    return CorrelationStack(
        tuple(panel.dates[e] for e in ends),
        np.stack([r[0] for r in results]),
        spec,
        panel.asset_ids,
        ends,
        notes,
    )
