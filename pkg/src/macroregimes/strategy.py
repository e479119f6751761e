"""Regime-local lead-lag trading signal against a uniform all-asset benchmark."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import ReturnsPanel


@dataclass(frozen=True)
class TradeRecord:
    regime_id: int
    open_date: object
    close_date: object
    direction: int
    assets: tuple
    signal_value: float
    realized_return: float
    benchmark_return: float
    signal_end_row: int
    first_holding_row: int


@dataclass
class RegimeResult:
    regime_id: int
    lag: int
    strategy_mean_return: float
    benchmark_mean_return: float
    trade_count: int
    periods: int


@dataclass
class StrategyReport:
    regimes: dict = field(default_factory=dict)
    trades: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _spans(mask):
    """(start, stop) row ranges where ``mask`` is True."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > 1)
    starts = np.r_[idx[0], idx[cuts + 1]]
    stops = np.r_[idx[cuts], idx[-1]] + 1
    return list(zip(starts.tolist(), stops.tolist()))


def _holding_return(X, rows, cols):
    """Mean daily return of an equal-weight basket over the holding rows."""
    return float(X[np.ix_(rows, cols)].mean())


def run_leadlag_strategy(panel: ReturnsPanel, row_regimes, clusterings: dict) -> StrategyReport:
    """Trade the lagging cluster on the sign of the leading cluster's trailing return.

    ``clusterings`` maps regime id to an object with ``lag``, ``leading``
    and ``lagging`` (see :class:`LeadLagClustering`). Within every
    contiguous span of a regime, non-overlapping cycles of ``lag`` rows
    start at the first row with ``lag`` rows of history. The signal is
    the mean leading-cluster return over the ``lag`` rows before the
    entry row; the position earns the lagging basket's mean return over
    the next ``lag`` rows. The benchmark holds every asset equally
    over the same rows.
    """
    X = panel.values
    row_regimes = np.asarray(row_regimes)
    report = StrategyReport()
    for r, cl in sorted(clusterings.items()):
        g = int(cl.lag)
        lead = np.asarray(cl.leading)
        lagging = np.asarray(cl.lagging)
        all_cols = np.arange(panel.N)
        strat, bench, trades, periods = [], [], 0, 0
        for start, stop in _spans(row_regimes == r):
            if stop - start < 2 * g:
                continue
            e = start + g
            while e + g <= stop:
                sig_rows = np.arange(e - g, e)
                hold_rows = np.arange(e, e + g)
                assert sig_rows[-1] < hold_rows[0]
                signal = float(X[np.ix_(sig_rows, lead)].mean())
                b = _holding_return(X, hold_rows, all_cols)
                bench.append(b)
                periods += 1
                direction = int(np.sign(signal))
                if direction != 0:
                    realized = direction * _holding_return(X, hold_rows, lagging)
                    strat.append(realized)
                    trades += 1
                    report.trades.append(TradeRecord(
                        r, panel.dates[e - 1], panel.dates[e - 1 + g], direction,
                        tuple(int(a) for a in panel.asset_ids[lagging]), signal, realized, b,
                        int(sig_rows[-1]), int(hold_rows[0]),
                    ))
                e += g
        if periods == 0:
            msg = f"regime {r}: no span of at least {2 * g} rows; skipped"
            report.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            continue
        report.regimes[r] = RegimeResult(
            r, g, float(np.mean(strat)) if strat else float("nan"), float(np.mean(bench)), trades, periods,
        )
    return report


def write_blotter(report: StrategyReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "open_date", "close_date", "direction", "assets", "signal",
                    "realized_return", "benchmark_return"])
        for t in report.trades:
            w.writerow([t.regime_id, t.open_date.isoformat(), t.close_date.isoformat(), t.direction,
                        " ".join(map(str, t.assets)), f"{t.signal_value:.12g}",
                        f"{t.realized_return:.12g}", f"{t.benchmark_return:.12g}"])


def write_comparison(report: StrategyReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "lag", "strategy_mean_return", "benchmark_mean_return", "trade_count", "periods"])
        for r in report.regimes.values():
            w.writerow([r.regime_id, r.lag, f"{r.strategy_mean_return:.12g}",
                        f"{r.benchmark_mean_return:.12g}", r.trade_count, r.periods])
