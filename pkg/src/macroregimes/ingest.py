"""Panel ingestion: level CSVs, asset metadata and return transforms."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

MISSING_MARKERS = frozenset({"", "nan", "NaN", "NAN"})


class IngestError(ValueError):
    """Raised when a panel file or transform input is malformed."""


class AssetClass(str, Enum):
    EQUITY = "equity"
    COMMODITY = "commodity"
    FIXED_INCOME = "fixed_income"
    CASH = "cash"
    CURRENCY = "currency"
    VOLATILITY = "volatility"
    BOND_SPREAD = "bond_spread"
    INTEREST_RATE = "interest_rate"


class ReturnKind(str, Enum):
    PERCENT_CHANGE = "percent_change"
    SIMPLE_DIFFERENCE = "simple_difference"


@dataclass(frozen=True)
class AssetMeta:
    id: int
    name: str
    asset_class: AssetClass
    return_kind: ReturnKind = ReturnKind.PERCENT_CHANGE

    def __post_init__(self):
        object.__setattr__(self, "asset_class", AssetClass(self.asset_class))
        object.__setattr__(self, "return_kind", ReturnKind(self.return_kind))


@dataclass(frozen=True)
class LevelsPanel:
    """Dated price or rate levels. Missing cells are NaN."""

    dates: tuple
    columns: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.dates), len(self.columns)):
            raise IngestError(
                f"values shape {values.shape} does not match "
                f"{len(self.dates)} dates x {len(self.columns)} columns"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class ReturnsPanel:
    """T x N matrix of dated returns with one AssetMeta per column."""

    dates: tuple
    values: np.ndarray
    assets: tuple = field(default=())

    def __post_init__(self):
        dates = tuple(self.dates)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise IngestError("returns must be a 2-d matrix")
        if values.shape[0] != len(dates):
            raise IngestError("one row of returns is required per date")
        if values.shape[0] < 2:
            raise IngestError("a returns panel needs at least 2 dates")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise IngestError("dates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise IngestError(f"non-finite return at row {r} ({dates[r]}), column {c}")
        assets = tuple(self.assets)
        if not assets:
            assets = tuple(
                AssetMeta(i, f"asset_{i}", AssetClass.EQUITY) for i in range(values.shape[1])
            )
        if len(assets) != values.shape[1]:
            raise IngestError("one AssetMeta is required per column")
        ids = [a.id for a in assets]
        if len(set(ids)) != len(ids):
            raise IngestError("asset ids must be unique within a panel")
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "assets", assets)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def asset_ids(self) -> np.ndarray:
        return np.array([a.id for a in self.assets])

    @property
    def asset_classes(self) -> list[str]:
        return [a.asset_class.value for a in self.assets]

    def rows(self, index) -> "ReturnsPanel":
        """Sub-panel over the given row positions (kept in order)."""
        index = np.asarray(index)
        return ReturnsPanel(tuple(self.dates[i] for i in index), self.values[index], self.assets)


def _parse_date(text: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise IngestError(f"row {row}: unparseable date {text!r}") from None


def load_levels(path, schema: dict | None = None) -> LevelsPanel:
    """Read a level CSV whose first column is an ISO date.

    ``schema`` optionally renames or selects columns: ``{"date": <header>,
    "columns": [<header>, ...]}``. Missing cells (blank or ``NaN``) become
    NaN; any other non-numeric text is an error naming the row and column.
    """
    schema = schema or {}
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        rows = [r for r in reader if r]

    date_col = schema.get("date", header[0])
    if date_col not in header:
        raise IngestError(f"{path}: date column {date_col!r} not found")
    di = header.index(date_col)
    columns = schema.get("columns") or [h for i, h in enumerate(header) if i != di]
    try:
        col_idx = [header.index(c) for c in columns]
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None

    dates = []
    values = np.empty((len(rows), len(columns)))
    for r, line in enumerate(rows, start=2):
        if len(line) != len(header):
            raise IngestError(f"row {r}: expected {len(header)} cells, got {len(line)}")
        dates.append(_parse_date(line[di], r))
        for j, c in enumerate(col_idx):
            cell = line[c].strip()
            if cell in MISSING_MARKERS:
                values[r - 2, j] = math.nan
                continue
            try:
                values[r - 2, j] = float(cell)
            except ValueError:
                raise IngestError(
                    f"row {r}, column {columns[j]!r}: unparseable number {cell!r}"
                ) from None

    seen = set()
    for r, d in enumerate(dates, start=2):
        if d in seen:
            raise IngestError(f"row {r}: duplicate date {d.isoformat()}")
        seen.add(d)

    order = np.argsort(np.array([d.toordinal() for d in dates]), kind="stable")
    return LevelsPanel(tuple(dates[i] for i in order), tuple(columns), values[order])


def require_complete(levels: LevelsPanel) -> None:
    """Raise naming the first missing cell, if any."""
    bad = np.argwhere(np.isnan(levels.values))
    if len(bad):
        r, c = bad[0]
        raise IngestError(
            f"missing value at date {levels.dates[r].isoformat()}, column {levels.columns[c]!r}"
        )


def restrict_complete(levels: LevelsPanel) -> LevelsPanel:
    """Drop gapped columns, then trim rows to the common observed date range.

    A gap is a missing cell between a column's first and last observation.
    Columns that merely start late or stop early are kept; the panel is
    then cut to the dates where every kept column is observed.
    """
    values = levels.values
    missing = np.isnan(values)
    keep = np.zeros(values.shape[1], dtype=bool)
    for j in range(values.shape[1]):
        seen = np.flatnonzero(~missing[:, j])
        if len(seen):
            keep[j] = not missing[seen[0] : seen[-1] + 1, j].any()
    if not keep.any():
        raise IngestError("every column contains missing values")
    sub = values[:, keep]
    rows = np.flatnonzero(~np.isnan(sub).any(axis=1))
    if len(rows) == 0:
        raise IngestError("kept columns share no common date range")
    first, last = rows[0], rows[-1]
    cols = tuple(c for c, k in zip(levels.columns, keep) if k)
    return LevelsPanel(levels.dates[first : last + 1], cols, sub[first : last + 1])


def to_returns(
    levels: LevelsPanel,
    meta: Sequence[AssetMeta],
    allow_difference_for: Sequence[str] = (AssetClass.INTEREST_RATE.value,),
) -> ReturnsPanel:
    """Convert levels to returns: percentage change, or simple difference for rates."""
    if levels.shape[0] < 2:
        raise IngestError("at least 2 level rows are required")
    if len(meta) != levels.shape[1]:
        raise IngestError(f"{len(meta)} metadata records for {levels.shape[1]} columns")
    require_complete(levels)
    allowed = {AssetClass(c) for c in allow_difference_for}
    x = levels.values
    out = np.empty((x.shape[0] - 1, x.shape[1]))
    for j, m in enumerate(meta):
        col = x[:, j]
        if m.return_kind is ReturnKind.SIMPLE_DIFFERENCE:
            if m.asset_class not in allowed:
                raise IngestError(
                    f"asset {m.name!r}: simple_difference is not enabled for class "
                    f"{m.asset_class.value}"
                )
            out[:, j] = np.diff(col)
        else:
            zero = np.flatnonzero(col == 0)
            if len(zero):
                raise IngestError(
                    f"asset {m.name!r}: zero level on {levels.dates[zero[0]].isoformat()} "
                    "cannot be used for a percentage change"
                )
            out[:, j] = col[1:] / col[:-1] - 1.0
    return ReturnsPanel(levels.dates[1:], out, tuple(meta))


def load_meta(path) -> list[AssetMeta]:
    """Read the sidecar metadata CSV: ``id,name,asset_class,return_kind``."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "name", "asset_class", "return_kind"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"{path}: missing metadata columns {sorted(missing)}")
        out = []
        for r, rec in enumerate(reader, start=2):
            try:
                out.append(
                    AssetMeta(
                        int(rec["id"]), rec["name"], rec["asset_class"].strip(),
                        rec["return_kind"].strip() or ReturnKind.PERCENT_CHANGE,
                    )
                )
            except ValueError as exc:
                raise IngestError(f"{path}: row {r}: {exc}") from None
    return out


def write_levels(path, dates, columns, values) -> None:
    """Write a level (or return) matrix in the ingest CSV layout."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *columns])
        for d, row in zip(dates, np.asarray(values)):
            w.writerow([d.isoformat(), *(repr(float(v)) for v in row)])


def write_meta(path, meta: Sequence[AssetMeta]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "name", "asset_class", "return_kind"])
        for m in meta:
            w.writerow([m.id, m.name, m.asset_class.value, m.return_kind.value])


def align_meta(levels: LevelsPanel, meta: Sequence[AssetMeta]) -> list[AssetMeta]:
    """Pick metadata records matching the level columns by name, in column order."""
    by_name = {m.name: m for m in meta}
    missing = [c for c in levels.columns if c not in by_name]
    if missing:
        raise IngestError(f"no metadata for columns {missing}")
    return [by_name[c] for c in levels.columns]
