"""Return/price panels: ingestion, alignment, and derived series.

Conventions
-----------
Timestamps are opaque ordered labels (weekly data uses ISO year-week
strings like ``2014-W07``).  A panel stores a dense T x N float matrix
plus a boolean mask; masked (unobserved) cells hold NaN.  Panels are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateCell,
    EmptyPanel,
    LengthMismatch,
    MalformedCsv,
    NonPositivePrice,
    PanelGapError,
    TotalLoss,
)

ORIGIN_LABEL = "origin"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ReturnsPanel:
    """Aligned time x asset matrix of simple per-period returns."""

    timestamps: tuple[str, ...]
    assets: tuple[str, ...]
    values: np.ndarray  # (T, N) float64, NaN where masked
    mask: np.ndarray    # (T, N) bool, True = observed

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "assets", tuple(self.assets))
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != (len(self.timestamps), len(self.assets)):
            raise LengthMismatch(
                f"values shape {values.shape} does not match "
                f"{len(self.timestamps)} timestamps x {len(self.assets)} assets"
            )
        if mask.shape != values.shape:
            raise LengthMismatch("mask shape does not match values shape")
        if len(set(self.timestamps)) != len(self.timestamps):
            raise DuplicateCell("duplicate timestamps")
        if len(set(self.assets)) != len(self.assets):
            raise DuplicateCell("duplicate asset identifiers")
        if not np.all(np.isfinite(values[mask])):
            raise MalformedCsv("non-finite value in an observed cell")
        values = values.copy()
        values[~mask] = np.nan
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "mask", _freeze(mask))

    @property
    def n_periods(self) -> int:
        return len(self.timestamps)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def column(self, asset: str) -> np.ndarray:
        return self.values[:, self.assets.index(asset)]

    def select_assets(self, names) -> "ReturnsPanel":
        idx = [self.assets.index(a) for a in names]
        return ReturnsPanel(self.timestamps, tuple(names),
                            self.values[:, idx], self.mask[:, idx])

    def slice_rows(self, start: int, stop: int) -> "ReturnsPanel":
        return ReturnsPanel(self.timestamps[start:stop], self.assets,
                            self.values[start:stop], self.mask[start:stop])


@dataclass(frozen=True)
class RiskFreeSeries:
    """Per-period risk-free return aligned with a returns panel."""

    timestamps: tuple[str, ...]
    rate: np.ndarray  # (T,) float64

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        rate = np.asarray(self.rate, dtype=float)
        if rate.ndim != 1 or rate.shape[0] != len(self.timestamps):
            raise LengthMismatch("risk-free series length mismatch")
        if not np.all(np.isfinite(rate)):
            raise MalformedCsv("non-finite risk-free rate")
        object.__setattr__(self, "rate", _freeze(rate))

    def slice_rows(self, start: int, stop: int) -> "RiskFreeSeries":
        return RiskFreeSeries(self.timestamps[start:stop], self.rate[start:stop])


@dataclass(frozen=True)
class PricePanel:
    """Adjusted price levels; row 0 is the initial price."""

    timestamps: tuple[str, ...]
    assets: tuple[str, ...]
    prices: np.ndarray  # (T, N) float64, all > 0

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "assets", tuple(self.assets))
        prices = np.asarray(self.prices, dtype=float)
        if prices.shape != (len(self.timestamps), len(self.assets)):
            raise LengthMismatch("prices shape mismatch")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise NonPositivePrice("prices must be finite and positive")
        object.__setattr__(self, "prices", _freeze(prices))

    @property
    def n_periods(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class BasisUniverse:
    """Candidate basis assets with category labels and a market index."""

    panel: ReturnsPanel
    categories: dict[str, str] = field(compare=False)
    market_index: str = "MKT"

    def __post_init__(self):
        from .errors import MissingMarketIndex, UnclassifiedEntity
        if self.market_index not in self.panel.assets:
            raise MissingMarketIndex(
                f"market index {self.market_index!r} not in basis panel")
        missing = [a for a in self.panel.assets if a not in self.categories]
        if missing:
            raise UnclassifiedEntity(f"uncategorised basis assets: {missing[:5]}")

    def category_of(self, asset: str) -> str:
        return self.categories[asset]


# --- CSV ingestion ----------------------------------------------------------

def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise MalformedCsv(f"cannot read {path}: {exc}") from exc


def _parse_cell(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise MalformedCsv(f"unparseable number {text!r} at {where}") from exc


def load_panel(path, layout: str = "wide") -> ReturnsPanel:
    """Load a returns panel from CSV.

    ``wide``: header ``date,<asset>,...``; empty cells mark missing data.
    ``long``: header ``date,asset,value``; absent combinations are missing.
    The panel is aligned on the union of timestamps.
    """
    rows = _read_rows(path)
    if not rows:
        raise EmptyPanel(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if layout == "wide":
        if len(header) < 2 or header[0] != "date":
            raise MalformedCsv(f"{path}: wide header must start with 'date'")
        assets = tuple(header[1:])
        if len(set(assets)) != len(assets):
            raise DuplicateCell(f"{path}: duplicate asset column")
        dates, seen = [], set()
        cells = {}
        for r, row in enumerate(body, start=2):
            if len(row) != len(header):
                raise MalformedCsv(f"{path}: row {r} has {len(row)} fields, "
                                   f"expected {len(header)}")
            date = row[0]
            if date in seen:
                raise DuplicateCell(f"{path}: date {date!r} repeated")
            seen.add(date)
            dates.append(date)
            for a, text in zip(assets, row[1:]):
                if text != "":
                    cells[(date, a)] = _parse_cell(text, f"row {r}")
    elif layout == "long":
        if header != ["date", "asset", "value"]:
            raise MalformedCsv(f"{path}: long header must be date,asset,value")
        cells = {}
        for r, row in enumerate(body, start=2):
            if len(row) != 3:
                raise MalformedCsv(f"{path}: row {r} has {len(row)} fields")
            key = (row[0], row[1])
            if key in cells:
                raise DuplicateCell(f"{path}: duplicate cell {key}")
            cells[key] = _parse_cell(row[2], f"row {r}")
        dates = sorted({d for d, _ in cells})
        assets = tuple(sorted({a for _, a in cells}))
    else:
        raise MalformedCsv(f"unknown layout {layout!r}")

    if not dates or not assets:
        raise EmptyPanel(f"{path}: no data rows")
    values = np.full((len(dates), len(assets)), np.nan)
    mask = np.zeros_like(values, dtype=bool)
    col = {a: j for j, a in enumerate(assets)}
    row_ix = {d: i for i, d in enumerate(dates)}
    for (d, a), v in cells.items():
        values[row_ix[d], col[a]] = v
        mask[row_ix[d], col[a]] = True
    return ReturnsPanel(tuple(dates), assets, values, mask)


def write_panel(panel: ReturnsPanel, path, layout: str = "wide") -> None:
    """Write a panel so that ``load_panel`` round-trips it bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if layout == "wide":
            w.writerow(["date"] + list(panel.assets))
            for i, date in enumerate(panel.timestamps):
                row = [date]
                for j in range(panel.n_assets):
                    row.append(repr(float(panel.values[i, j]))
                               if panel.mask[i, j] else "")
                w.writerow(row)
        elif layout == "long":
            w.writerow(["date", "asset", "value"])
            for i, date in enumerate(panel.timestamps):
                for j, asset in enumerate(panel.assets):
                    if panel.mask[i, j]:
                        w.writerow([date, asset, repr(float(panel.values[i, j]))])
        else:
            raise MalformedCsv(f"unknown layout {layout!r}")


def load_riskfree(path) -> RiskFreeSeries:
    """Load a risk-free series from a ``date,rf`` CSV."""
    rows = _read_rows(path)
    if not rows or rows[0] != ["date", "rf"]:
        raise MalformedCsv(f"{path}: header must be date,rf")
    dates, rates = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise MalformedCsv(f"{path}: row {r} has {len(row)} fields")
        dates.append(row[0])
        rates.append(_parse_cell(row[1], f"row {r}"))
    if len(set(dates)) != len(dates):
        raise DuplicateCell(f"{path}: repeated date")
    return RiskFreeSeries(tuple(dates), np.array(rates))


def write_riskfree(rf: RiskFreeSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "rf"])
        for d, r in zip(rf.timestamps, rf.rate):
            w.writerow([d, repr(float(r))])


def load_label_map(path, kind: str = "category") -> dict[str, str]:
    """Load an ``asset,<label>`` two-column CSV into a dict."""
    rows = _read_rows(path)
    if not rows or len(rows[0]) != 2 or rows[0][0] != "asset":
        raise MalformedCsv(f"{path}: header must be asset,{kind}")
    out: dict[str, str] = {}
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise MalformedCsv(f"{path}: row {r} has {len(row)} fields")
        if row[0] in out:
            raise DuplicateCell(f"{path}: asset {row[0]!r} repeated")
        out[row[0]] = row[1]
    return out


def write_label_map(labels: dict[str, str], path, kind: str = "category") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asset", kind])
        for asset in labels:
            w.writerow([asset, labels[asset]])


# --- derived series ---------------------------------------------------------

def filter_coverage(panel: ReturnsPanel, min_frac: float) -> ReturnsPanel:
    """Keep assets observed in at least ``min_frac`` of the periods (inclusive)."""
    if not 0 < min_frac <= 1:
        raise ValueError("min_frac must be in (0, 1]")
    frac = panel.mask.mean(axis=0)
    keep = [a for a, f in zip(panel.assets, frac) if f >= min_frac]
    if not keep:
        raise EmptyPanel("no asset meets the coverage requirement")
    return panel.select_assets(keep)


def excess_returns(panel: ReturnsPanel, rf: RiskFreeSeries) -> ReturnsPanel:
    """Subtract the per-period risk-free rate from every observed cell."""
    if rf.timestamps != panel.timestamps:
        raise LengthMismatch("risk-free timestamps do not match panel")
    values = panel.values - rf.rate[:, None]
    return ReturnsPanel(panel.timestamps, panel.assets, values, panel.mask)


def adjusted_prices(panel: ReturnsPanel, initial,
                    origin_label: str = ORIGIN_LABEL) -> PricePanel:
    """Compound returns into adjusted price levels.

    Output has T+1 rows: row 0 holds the initial prices under
    ``origin_label`` and row t holds ``initial * prod_{k<t}(1+R(k))``.
    Requires a fully observed panel.
    """
    initial = np.asarray(initial, dtype=float)
    if initial.ndim == 0:
        initial = np.full(panel.n_assets, float(initial))
    if initial.shape != (panel.n_assets,):
        raise LengthMismatch("one initial price per asset required")
    if np.any(initial <= 0):
        raise NonPositivePrice("initial prices must be positive")
    if not panel.mask.all():
        raise PanelGapError("adjusted_prices requires a fully observed panel")
    growth = 1.0 + panel.values
    if np.any(growth <= 0):
        raise NonPositivePrice("a return <= -100% makes the price non-positive")
    prices = np.empty((panel.n_periods + 1, panel.n_assets))
    prices[0] = initial
    prices[1:] = initial * np.cumprod(growth, axis=0)
    return PricePanel((origin_label,) + panel.timestamps, panel.assets, prices)


def money_market(rf: RiskFreeSeries) -> np.ndarray:
    """Value of an account compounding at the risk-free rate, starting at 1.

    Returns one value per timestamp: ``B(t) = prod_{k<t}(1 + r0(k))``,
    so ``B(0) = 1`` and the final rate is not consumed.
    """
    out = np.empty(len(rf.timestamps))
    out[0] = 1.0
    if len(out) > 1:
        out[1:] = np.cumprod(1.0 + rf.rate[:-1])
    return out


def first_differences(prices: PricePanel) -> ReturnsPanel:
    """First-order price differences; output has one fewer row.

    The result reuses the panel container (values are currency
    differences, not returns) with an all-true mask.
    """
    if prices.n_periods < 2:
        raise EmptyPanel("need at least two price rows to difference")
    diffs = np.diff(prices.prices, axis=0)
    mask = np.ones_like(diffs, dtype=bool)
    return ReturnsPanel(prices.timestamps[1:], prices.assets, diffs, mask)


def cumulative_capital(returns: np.ndarray) -> np.ndarray:
    """Compound a return series into capital starting from 1."""
    returns = np.asarray(returns, dtype=float)
    growth = 1.0 + returns
    if np.any(growth <= 0):
        raise TotalLoss("a return <= -100% wipes out the capital")
    out = np.empty(returns.shape[0] + 1)
    out[0] = 1.0
    out[1:] = np.cumprod(growth)
    return out
