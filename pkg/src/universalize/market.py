"""Price and return series, the short-margin rule, CSV ingestion and synthetic markets.

Day indexing: ``returns[t]`` is the factor by which each instrument moves from
price ``t`` to price ``t + 1``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientHistory, MarginBreach, NonPositivePrice, ParseError

log = logging.getLogger(__name__)

# factor applied to 1 + alpha when clamping a breaching day
CLAMP_SHRINK = 1.0 - 1e-9


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    prices: np.ndarray
    dates: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=float)
        if p.ndim != 1:
            raise ValueError("prices must be one-dimensional")
        if np.any(~(p > 0)):
            bad = int(np.argmax(~(p > 0)))
            raise NonPositivePrice(float(p[bad]), row=bad, column=self.ticker)
        object.__setattr__(self, "prices", p)

    def __len__(self):
        return len(self.prices)

    def factors(self) -> np.ndarray:
        """Daily price factors ``p[t+1] / p[t]``."""
        if len(self.prices) < 2:
            raise InsufficientHistory(f"{self.ticker}: need at least 2 prices for a return")
        return self.prices[1:] / self.prices[:-1]


@dataclass(frozen=True)
class MarginSpec:
    alpha: float = 1.0

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise ValueError(f"margin requirement alpha must lie in (0, 1], got {self.alpha!r}")

    @property
    def neutral_long(self) -> float:
        """Long fraction of the (long, short) split that carries no net exposure."""
        return 1.0 / (self.alpha + 1.0)


@dataclass(frozen=True)
class MarketSeries:
    returns: np.ndarray
    labels: tuple = ()
    source: str = "synthetic"

    def __post_init__(self):
        x = np.asarray(self.returns, dtype=float)
        if x.ndim != 2:
            raise ValueError("returns must be a (days, instruments) array")
        if np.any(~(x > 0)):
            t, i = np.argwhere(~(x > 0))[0]
            raise ValueError(f"return factor {x[t, i]!r} on day {t}, instrument {i} is not positive")
        labels = tuple(self.labels) or tuple(f"x{i}" for i in range(x.shape[1]))
        if len(labels) != x.shape[1]:
            raise ValueError("one label per instrument required")
        x.setflags(write=False)
        object.__setattr__(self, "returns", x)
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.returns.shape[1]

    @property
    def n_days(self) -> int:
        return self.returns.shape[0]

    def __len__(self):
        return self.n_days

    def slice(self, start: int, stop: int) -> "MarketSeries":
        return MarketSeries(self.returns[start:stop], self.labels, self.source)

    @classmethod
    def from_prices(cls, series: Sequence[PriceSeries]) -> "MarketSeries":
        lengths = {len(s) for s in series}
        if len(lengths) != 1:
            raise ValueError("all price series must have the same length")
        x = np.column_stack([s.factors() for s in series])
        return cls(x, tuple(s.ticker for s in series), source="ingested")

    def to_prices(self, start: float = 1.0) -> np.ndarray:
        """Price paths (days + 1, m) implied by the returns, starting at ``start``."""
        out = np.empty((self.n_days + 1, self.m))
        out[0] = start
        np.cumprod(self.returns, axis=0, out=out[1:])
        out[1:] *= start
        return out


@dataclass(frozen=True)
class EnvironmentSnapshot:
    """What a strategy may look at on day ``t``; every value is scaled into (0, 1]."""

    t: int
    price_history: np.ndarray
    min_history: np.ndarray
    max_history: np.ndarray
    current_price: float
    indicators: np.ndarray | None = None
    side_info: np.ndarray | None = field(default=None)

    def check(self, atol: float = 1e-12) -> None:
        vals = [self.price_history, self.min_history, self.max_history, np.atleast_1d(self.current_price)]
        for v in vals:
            if np.any(v <= 0) or np.any(v > 1 + atol):
                raise ValueError("normalized values must lie in (0, 1]")
        if np.any(self.min_history > self.max_history + atol):
            raise ValueError("min history exceeds max history")
        if self.indicators is not None:
            ind = self.indicators
            if np.any(ind <= 0) or np.any(np.abs(ind.max(axis=0) - 1) > atol):
                raise ValueError("indicator columns must lie in (0, 1] with column max 1")


def short_return(x, margin: MarginSpec | float):
    """Daily value factor of a rebalanced short position.

    Works elementwise on arrays. Raises :class:`MarginBreach` when a factor
    reaches ``1 + alpha``.
    """
    alpha = margin.alpha if isinstance(margin, MarginSpec) else float(margin)
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("price factors must be positive")
    bad = xa >= 1 + alpha
    if np.any(bad):
        idx = int(np.argmax(bad.ravel()))
        raise MarginBreach(float(xa.ravel()[idx]), alpha, day=idx if xa.ndim else None)
    out = 1.0 + (1.0 - xa) / alpha
    return float(out) if np.ndim(x) == 0 else out


def trading_market(prices: PriceSeries, margin: MarginSpec, on_breach: str = "raise") -> MarketSeries:
    """Two-instrument market of (long, short) factors for a single stock.

    ``on_breach="clamp"`` shrinks breaching factors just below ``1 + alpha``
    instead of raising; each clamped day is logged.
    """
    x = prices.factors()
    limit = 1.0 + margin.alpha
    bad = np.flatnonzero(x >= limit)
    if bad.size:
        if on_breach != "clamp":
            raise MarginBreach(float(x[bad[0]]), margin.alpha, day=int(bad[0]))
        x = x.copy()
        for day in bad:
            log.warning("clamping margin breach on day %d: %r -> %r", day, x[day], limit * CLAMP_SHRINK)
        x[bad] = limit * CLAMP_SHRINK
    short = 1.0 + (1.0 - x) / margin.alpha
    return MarketSeries(np.column_stack([x, short]), (f"{prices.ticker}:long", f"{prices.ticker}:short"),
                        source="ingested")


def cover_market(num_days: int) -> MarketSeries:
    """One flat stock and one that doubles, then halves, on alternate days."""
    if num_days < 1:
        raise ValueError("num_days must be >= 1")
    second = np.where(np.arange(num_days) % 2 == 0, 2.0, 0.5)
    return MarketSeries(np.column_stack([np.ones(num_days), second]), ("flat", "seesaw"))


def constant_market(num_days: int, m: int = 2) -> MarketSeries:
    return MarketSeries(np.ones((num_days, m)), tuple(f"c{i}" for i in range(m)))


def lognormal_market(num_days: int, m: int = 2, mu: float = 0.0, sigma: float = 0.05,
                     seed: int = 0) -> MarketSeries:
    """I.i.d. lognormal daily factors ``exp(N(mu, sigma^2))`` per instrument."""
    rng = np.random.default_rng(seed)
    x = np.exp(rng.normal(mu, sigma, size=(num_days, m)))
    return MarketSeries(x, tuple(f"s{i}" for i in range(m)))


def _window_extrema(prices: np.ndarray, t: int, k: int):
    # previous k prices, most recent first: prices[t-1], ..., prices[t-k]
    window = prices[t - k:t][::-1]
    return window, np.minimum.accumulate(window), np.maximum.accumulate(window)


def normalize_environment(prices, k: int, t: int | None = None, indicators=None,
                          side_info=None) -> EnvironmentSnapshot:
    """Build the day-``t`` snapshot from raw prices ``prices[0..t]``.

    ``price_history[j-1]`` is the price ``j`` days before ``t``; the min and max
    histories run over the trailing ``j`` days. Everything is divided by the
    largest raw value in the snapshot, so the maximum is exactly 1. Raw
    ``indicators`` (instruments x indicators) are scaled column-wise by their
    cross-sectional maximum.
    """
    p = np.asarray(prices, dtype=float)
    if t is None:
        t = len(p) - 1
    if k < 1:
        raise ValueError("window k must be >= 1")
    if t < k or t >= len(p):
        raise InsufficientHistory(f"day {t} with window {k} needs prices 0..{t} with t >= k "
                                  f"({len(p)} available)")
    if np.any(p[: t + 1] <= 0):
        raise ValueError("raw prices must be positive")
    window, lo, hi = _window_extrema(p, t, k)
    scale = max(window.max(), p[t])
    ind = None if indicators is None else normalize_indicators(indicators)
    side = None if side_info is None else np.asarray(side_info, dtype=float)
    return EnvironmentSnapshot(t, window / scale, lo / scale, hi / scale, float(p[t] / scale), ind, side)


def normalize_indicators(raw) -> np.ndarray:
    """Scale each indicator column so its largest entry across instruments is 1."""
    v = np.asarray(raw, dtype=float)
    if np.any(v <= 0):
        raise ValueError("raw indicators must be positive")
    return v / v.max(axis=-2, keepdims=True)


def ingest_csv(path) -> list[PriceSeries]:
    """Read ``date,<ticker>,...`` rows into one :class:`PriceSeries` per ticker.

    Dates must be ISO-8601 and strictly ascending; empty cells are errors.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", row=0) from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0].lower() != "date":
            raise ParseError("header must be 'date,<ticker1>,...'", row=0)
        tickers = header[1:]
        if len(set(tickers)) != len(tickers) or any(not t for t in tickers):
            raise ParseError("ticker names must be unique and non-empty", row=0)
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=lineno)
            try:
                d = _dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad date {row[0]!r}", row=lineno, column="date") from None
            if dates and d <= dates[-1]:
                raise ParseError(f"date {d} not after {dates[-1]}", row=lineno, column="date")
            vals = []
            for col, cell in zip(tickers, row[1:]):
                cell = cell.strip()
                if not cell:
                    raise ParseError("missing value", row=lineno, column=col)
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"bad number {cell!r}", row=lineno, column=col) from None
                if not np.isfinite(v):
                    raise ParseError(f"non-finite number {cell!r}", row=lineno, column=col)
                if v <= 0:
                    raise NonPositivePrice(v, row=lineno, column=col)
                vals.append(v)
            dates.append(d)
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows", row=1)
    arr = np.array(rows, dtype=float)
    iso = tuple(d.isoformat() for d in dates)
    return [PriceSeries(tk, arr[:, j], iso) for j, tk in enumerate(tickers)]


def write_csv(path, prices: np.ndarray, tickers: Sequence[str],
              start: _dt.date = _dt.date(2000, 1, 3)) -> Path:
    """Write a price table in the ingest format, one calendar day per row."""
    path = Path(path)
    prices = np.asarray(prices, dtype=float)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *tickers])
        for i, row in enumerate(prices):
            w.writerow([(start + _dt.timedelta(days=i)).isoformat(), *(repr(float(v)) for v in row)])
    return path
