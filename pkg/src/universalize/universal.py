"""Exact universalization by quadrature over a parameter grid.

The day-``t`` universal description is the average of ``S_t(w)`` over the
grid, each point weighted by its past cumulative return ``R_t(w)`` and by the
fraction of its cube inside the parameter space. All products are carried in
log space and normalized by the running maximum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, LengthMismatch, PartitionError
from .geometry import GridSpec, single_point_grid
from .market import MarketSeries
from .strategies import FloorSchedule, Strategy, param_point


@dataclass(frozen=True)
class WealthLedger:
    """Daily factors and cumulative log wealth of one run (``log_wealth[0] == 0``)."""

    daily_returns: np.ndarray
    log_wealth: np.ndarray
    descriptions: np.ndarray | None = field(default=None, repr=False)
    benchmark_log_wealth: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_daily(cls, daily, descriptions=None, benchmark=None) -> "WealthLedger":
        daily = np.asarray(daily, dtype=float)
        if np.any(daily <= 0):
            raise ValueError("daily wealth factors must be positive")
        logw = np.concatenate([[0.0], np.cumsum(np.log(daily))])
        return cls(daily, logw, descriptions, benchmark)

    @property
    def n_days(self) -> int:
        return len(self.daily_returns)

    def __len__(self):
        return self.n_days

    @property
    def cumulative(self) -> np.ndarray:
        """``R_0 .. R_n``."""
        return np.exp(self.log_wealth)

    @property
    def final_wealth(self) -> float:
        return float(np.exp(self.log_wealth[-1]))

    @property
    def log_normalized(self) -> np.ndarray:
        """``L_n = log(R_n) / n`` for ``n = 1..N``."""
        n = np.arange(1, self.n_days + 1)
        return self.log_wealth[1:] / n


@dataclass(frozen=True)
class HindsightOptimum:
    index: int
    point: np.ndarray
    log_value: float
    running_best_log: np.ndarray = field(repr=False)
    grid: GridSpec | None = field(default=None, repr=False)

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


@dataclass(frozen=True)
class DynamicSchedule:
    """Consecutive day intervals ``[start, stop)`` covering ``[0, n)``."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((int(a), int(b)) for a, b in self.intervals)
        if not iv:
            raise PartitionError("schedule needs at least one interval")
        if iv[0][0] != 0:
            raise PartitionError("first interval must start at day 0")
        for (a, b), nxt in zip(iv, iv[1:] + ((None, None),)):
            if b <= a:
                raise PartitionError(f"interval [{a}, {b}) is empty")
            if nxt[0] is not None and nxt[0] != b:
                raise PartitionError(f"intervals must be contiguous: [{a}, {b}) then starts at {nxt[0]}")
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def uniform(cls, n_days: int, length: int) -> "DynamicSchedule":
        if length < 1:
            raise PartitionError("interval length must be >= 1")
        return cls(tuple((a, min(a + length, n_days)) for a in range(0, n_days, length)))

    @property
    def n_days(self) -> int:
        return self.intervals[-1][1]

    def starts(self) -> set:
        return {a for a, _ in self.intervals}


def _check(strategy: Strategy, market: MarketSeries, grid: GridSpec | None = None):
    if strategy.meta.m != market.m:
        raise DimensionMismatch(f"{strategy.name} allocates over {strategy.meta.m} instruments, "
                                f"market has {market.m}")
    if strategy.n_days is not None and strategy.n_days < market.n_days:
        raise DimensionMismatch(f"{strategy.name} has environment for {strategy.n_days} days, "
                                f"market has {market.n_days}")
    if grid is not None and (grid.space.k, grid.space.ell) != (strategy.meta.k, strategy.meta.ell):
        raise DimensionMismatch(f"grid is over W_{grid.space.k}^{grid.space.ell}, strategy needs "
                                f"W_{strategy.meta.k}^{strategy.meta.ell}")


def grid_descriptions(strategy: Strategy, grid: GridSpec, t: int, floor: FloorSchedule | None = None):
    """``S_t(w)`` for every grid point, floored when a schedule is given: ``(G, m)``."""
    S = strategy.describe_batch(grid.points, t)
    return S if floor is None else floor.apply(S, t)


def iter_grid_days(strategy: Strategy, grid: GridSpec, market: MarketSeries,
                   floor: FloorSchedule | None = None) -> Iterator[tuple]:
    """Yield ``(t, S_t, log r_t)`` over the grid for each market day."""
    _check(strategy, market, grid)
    for t in range(market.n_days):
        S = grid_descriptions(strategy, grid, t, floor)
        yield t, S, np.log(S @ market.returns[t])


def weighted_average(log_weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``sum_g p_g values_g`` with ``p`` proportional to ``exp(log_weights)``, max-shifted."""
    shifted = np.exp(log_weights - log_weights.max())
    return shifted @ values / shifted.sum()


def cumulative_return(strategy: Strategy, w, market: MarketSeries,
                      floor: FloorSchedule | None = None) -> WealthLedger:
    """Ledger of ``S(w)`` held for the whole market, with optional floor."""
    w = param_point(w, k=strategy.meta.k, ell=strategy.meta.ell)
    _check(strategy, market)
    daily = np.empty(market.n_days)
    desc = np.empty((market.n_days, market.m))
    for t in range(market.n_days):
        s = strategy.describe_batch(w, t)
        if floor is not None:
            s = floor.apply(s, t)
        desc[t] = s
        daily[t] = s @ market.returns[t]
    return WealthLedger.from_daily(daily, desc)


def grid_log_returns(strategy: Strategy, grid: GridSpec, market: MarketSeries, upto: int | None = None,
                     floor: FloorSchedule | None = None) -> np.ndarray:
    """``log R_upto(w)`` for every grid point (``upto`` defaults to the full market)."""
    upto = market.n_days if upto is None else upto
    logR = np.zeros(len(grid))
    for t, _, logr in iter_grid_days(strategy, grid, market.slice(0, upto), floor):
        logR += logr
    return logR


def universal_describe(strategy: Strategy, grid: GridSpec, market: MarketSeries, t: int,
                       floor: FloorSchedule | None = None) -> np.ndarray:
    """Universal description for day ``t`` from the returns of days ``0 .. t-1``."""
    if not 0 <= t <= market.n_days:
        raise ValueError(f"day {t} outside market of {market.n_days} days")
    logR = grid_log_returns(strategy, grid, market, t, floor)
    S = grid_descriptions(strategy, grid, t, floor)
    return weighted_average(logR + grid.log_volume, S)


def grid_mean_log_wealth(strategy: Strategy, grid: GridSpec, market: MarketSeries,
                         floor: FloorSchedule | None = None) -> float:
    """Log of the volume-weighted grid mean of ``R_n(w)``."""
    logR = grid_log_returns(strategy, grid, market, None, floor)
    return float(logsumexp(logR + grid.log_volume) - logsumexp(grid.log_volume))


def universal_run(strategy: Strategy, grid: GridSpec, market: MarketSeries,
                  floor: FloorSchedule | None = None) -> WealthLedger:
    """Run the universal strategy day by day.

    The returned ledger also carries the daily descriptions and the running
    grid-best log wealth ``max_w log R_n(w)`` as its benchmark.
    """
    return _run(strategy, grid, market, floor, resets=set())


def dynamic_universal_run(strategy: Strategy, grid: GridSpec, market: MarketSeries,
                          schedule: DynamicSchedule, floor: FloorSchedule | None = None) -> WealthLedger:
    """Universalization that restarts its return weighting at each interval boundary.

    The benchmark is the product over intervals of the best grid return within
    each interval.
    """
    if schedule.n_days != market.n_days:
        raise PartitionError(f"schedule covers {schedule.n_days} days, market has {market.n_days}")
    return _run(strategy, grid, market, floor, resets=schedule.starts())


def _run(strategy, grid, market, floor, resets) -> WealthLedger:
    n = market.n_days
    daily = np.empty(n)
    desc = np.empty((n, market.m))
    bench = np.zeros(n + 1)
    logR = np.zeros(len(grid))
    banked = 0.0
    for t, S, logr in iter_grid_days(strategy, grid, market, floor):
        if t in resets and t > 0:
            banked += logR.max()
            logR[:] = 0.0
        u = weighted_average(logR + grid.log_volume, S)
        desc[t] = u
        daily[t] = u @ market.returns[t]
        logR += logr
        bench[t + 1] = banked + logR.max()
    return WealthLedger.from_daily(daily, desc, bench)


def hindsight_optimum(strategy: Strategy, grid: GridSpec, market: MarketSeries,
                      floor: FloorSchedule | None = None) -> HindsightOptimum:
    """Best grid point for the whole market; ties go to the lowest grid index."""
    if len(grid) == 0:
        raise ValueError("empty grid")
    running = np.zeros(market.n_days + 1)
    logR = np.zeros(len(grid))
    for t, _, logr in iter_grid_days(strategy, grid, market, floor):
        logR += logr
        running[t + 1] = logR.max()
    i = int(np.argmax(logR))
    return HindsightOptimum(i, grid.points[i].copy(), float(logR[i]), running, grid)


def regret(universal: WealthLedger, optimum: HindsightOptimum | WealthLedger | np.ndarray) -> np.ndarray:
    """Per-day normalized log-return gap ``L_n(best) - L_n(U)`` for ``n = 1..N``.

    ``optimum`` may be a :class:`HindsightOptimum` (its running grid best is
    used), a ledger, or a raw ``(N + 1,)`` log-wealth array.
    """
    if isinstance(optimum, HindsightOptimum):
        best = optimum.running_best_log
    elif isinstance(optimum, WealthLedger):
        best = optimum.log_wealth
    else:
        best = np.asarray(optimum, dtype=float)
    if len(best) != len(universal.log_wealth):
        raise LengthMismatch(f"benchmark covers {len(best) - 1} days, universal ledger {universal.n_days}")
    n = np.arange(1, universal.n_days + 1)
    return (best[1:] - universal.log_wealth[1:]) / n


LEDGER_COLUMNS = ("day", "universal_return", "universal_wealth_log", "best_wealth_log", "regret")


def write_ledger(path, ledger: WealthLedger, benchmark: Sequence[float] | None = None) -> Path:
    """Write ``day, universal_return, universal_wealth_log, best_wealth_log, regret`` rows."""
    path = Path(path)
    best = ledger.benchmark_log_wealth if benchmark is None else np.asarray(benchmark)
    if best is None:
        raise ValueError("ledger has no benchmark to report")
    gaps = regret(ledger, best)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for t in range(ledger.n_days):
            w.writerow([t, repr(float(ledger.daily_returns[t])), repr(float(ledger.log_wealth[t + 1])),
                        repr(float(best[t + 1])), repr(float(gaps[t]))])
    return path


def point_ledger_on_grid(strategy: Strategy, w, market: MarketSeries, floor=None) -> WealthLedger:
    """Universal run on the one-point grid at ``w``; equals :func:`cumulative_return` at ``w``."""
    return universal_run(strategy, single_point_grid(param_point(w)), market, floor)
