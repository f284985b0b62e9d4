"""Parameterized investment strategies and the allocation floor.

Every strategy maps a parameter point ``w`` (an ``(ell, k)`` array whose rows
lie on the simplex) and a day ``t`` to an investment description: a vector of
``m`` nonnegative wealth fractions summing to one. The batch form
``describe_batch(W, t)`` takes ``W`` of shape ``(G, ell, k)`` and returns
``(G, m)``; the universalizer and the sampler only ever use that form.

Trading strategies (moving-average cross-over, support/resistance) trade a
single stock as a two-instrument (long, short) market; portfolio strategies
(CRP, CRP with side information, indicator aggregation) spread wealth over
``m`` instruments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InsufficientHistory
from .market import (
    EnvironmentSnapshot,
    MarginSpec,
    MarketSeries,
    PriceSeries,
    normalize_environment,
    normalize_indicators,
    trading_market,
)

SIMPLEX_ATOL = 1e-12


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

def param_point(blocks, k: int | None = None, ell: int | None = None) -> np.ndarray:
    """Validate and return ``blocks`` as an ``(ell, k)`` float array on the simplex product."""
    w = np.array(blocks, dtype=float)
    if w.ndim == 1:
        w = w[None, :]
    if w.ndim != 2:
        raise DimensionMismatch("a parameter point is a list of simplex blocks")
    if k is not None and w.shape[1] != k:
        raise DimensionMismatch(f"expected blocks of length {k}, got {w.shape[1]}")
    if ell is not None and w.shape[0] != ell:
        raise DimensionMismatch(f"expected {ell} blocks, got {w.shape[0]}")
    if w.shape[1] < 2:
        raise DimensionMismatch("simplex blocks need k >= 2")
    if np.any(w < -SIMPLEX_ATOL) or np.any(np.abs(w.sum(axis=1) - 1) > SIMPLEX_ATOL):
        raise ValueError(f"parameter blocks must be nonnegative and sum to 1: {w.tolist()}")
    return w


def check_allocation(a, m: int | None = None, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Raise unless ``a`` (or every row of it) is a valid allocation vector."""
    a = np.asarray(a, dtype=float)
    if m is not None and a.shape[-1] != m:
        raise DimensionMismatch(f"allocation has {a.shape[-1]} components, expected {m}")
    if np.any(a < -atol) or np.any(np.abs(a.sum(axis=-1) - 1) > atol):
        raise ValueError("allocation components must be nonnegative and sum to 1")
    return a


@dataclass(frozen=True)
class StrategyMeta:
    """Static facts about a strategy.

    ``derivative_bound`` is a constant ``c`` with ``|dS_ti/dw| <= c (t + 1)``
    in the free coordinates (``inf`` when the allocation is discontinuous).
    ``second_partials_zero`` marks strategies whose description is affine in
    ``w``; for those the cumulative return is log-concave.
    """

    name: str
    k: int
    ell: int
    m: int
    derivative_bound: float
    second_partials_zero: bool

    def __post_init__(self):
        if self.k < 2 or self.ell < 1 or self.m < 1:
            raise ValueError("need k >= 2, ell >= 1, m >= 1")
        if not self.derivative_bound >= 0:
            raise ValueError("derivative bound must be >= 0")

    @property
    def universalizable(self) -> bool:
        return math.isfinite(self.derivative_bound)


@dataclass(frozen=True)
class FloorSchedule:
    """Mix a description toward uniform by ``epsilon / (2 (t+1)^2)``."""

    epsilon: float

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ValueError("epsilon must lie in (0, 1)")

    def weight(self, t: int) -> float:
        return self.epsilon / (2.0 * (t + 1) ** 2)

    def lower_bound(self, t: int, m: int) -> float:
        return self.weight(t) / m

    def apply(self, raw, t: int):
        raw = np.asarray(raw, dtype=float)
        a = self.weight(t)
        return (1.0 - a) * raw + a / raw.shape[-1]


def floor_transform(raw, t: int, m: int, floor: FloorSchedule | None) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != m:
        raise DimensionMismatch(f"allocation has {raw.shape[-1]} components, expected {m}")
    if floor is None:
        return raw
    return floor.apply(raw, t)


# ---------------------------------------------------------------------------
# long/short allocation functions
# ---------------------------------------------------------------------------

def g_step(x, t=None):
    return np.where(np.asarray(x) < 0, 0.0, 1.0)


def g_linear_step(x, t):
    # linear ramp of slope t/2 on [-1/t, 1/t]; t = 0 degenerates to the constant 1/2
    return np.clip(0.5 * t * np.asarray(x, dtype=float) + 0.5, 0.0, 1.0)


def g_line(x, t=None):
    return (np.asarray(x, dtype=float) + 1.0) / 2.0


def h_step(x, y, alpha, t=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # case order: y <= 0 -> 0 wins over x >= 0 -> 1 at the origin
    return np.where(y <= 0, 0.0, np.where(x < 0, 1.0 / (alpha + 1.0), 1.0))


def h_smoothed(x, y, alpha, t):
    """Independent linear ramps in x and y of width 2/t, weighted through the neutral plateau."""
    return (g_linear_step(y, t) + alpha * g_linear_step(x, t)) / (alpha + 1.0)


def h_plane(x, y, alpha, t=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x + 1.0) * alpha / (2.0 * (alpha + 1.0)) + (y + 1.0) / (2.0 * (alpha + 1.0))


_MA_KINDS = {"step": g_step, "linear_step": g_linear_step, "line": g_line}
_SR_KINDS = {"step": h_step, "smoothed": h_smoothed, "plane": h_plane}


@dataclass(frozen=True)
class AllocationFunction:
    """Long fraction as a function of a signal: ``g(x)`` for MA, ``h(x, y)`` for SR."""

    kind: str
    family: str = "ma"
    alpha: float = 1.0

    def __post_init__(self):
        table = _MA_KINDS if self.family == "ma" else _SR_KINDS if self.family == "sr" else None
        if table is None:
            raise ValueError(f"unknown allocation family {self.family!r}")
        if self.kind not in table:
            raise ValueError(f"unknown {self.family} allocation kind {self.kind!r}; "
                             f"choose from {sorted(table)}")

    def __call__(self, *args, t: int = 0):
        if self.family == "ma":
            return _MA_KINDS[self.kind](args[0], t)
        return _SR_KINDS[self.kind](args[0], args[1], self.alpha, t)

    @property
    def continuous(self) -> bool:
        return self.kind != "step"

    @property
    def affine(self) -> bool:
        return self.kind in ("line", "plane")


@dataclass(frozen=True)
class SideInfoModel:
    """Maps a side-information vector to ``ell`` block weights summing to one.

    ``proportional``: ``f_j = v_j / sum(v)``. ``one_hot``: all weight on the
    largest entry (state-based side information). A custom callable may be
    supplied instead.
    """

    mode: str = "proportional"
    func: Callable | None = None

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.func is not None:
            f = np.asarray(self.func(v), dtype=float)
        elif self.mode == "proportional":
            if np.any(v < 0) or np.any(v.sum(axis=-1) <= 0):
                raise ValueError("proportional side-info model needs nonnegative v with positive sum")
            f = v / v.sum(axis=-1, keepdims=True)
        elif self.mode == "one_hot":
            f = np.zeros_like(v)
            np.put_along_axis(f, np.argmax(v, axis=-1)[..., None], 1.0, axis=-1)
        else:
            raise ValueError(f"unknown side-info mode {self.mode!r}")
        if np.any(f < -SIMPLEX_ATOL) or np.any(np.abs(f.sum(axis=-1) - 1) > 1e-9):
            raise ValueError("side-info model output must be nonnegative and sum to 1")
        return f


# ---------------------------------------------------------------------------
# description formulas (batch-capable: leading axes of w broadcast)
# ---------------------------------------------------------------------------

def _ma_formula(W, v, alloc: AllocationFunction, t):
    arg = (W[..., 0, :] - W[..., 1, :]) @ v
    g = alloc(arg, t=t)
    return np.stack([g, 1.0 - g], axis=-1)


def _sr_formula(W, lo, hi, p, alloc: AllocationFunction, t):
    w = W[..., 0, :]
    support = w @ lo
    resistance = w @ hi
    h = alloc(p - resistance, p - support, t=t)
    return np.stack([h, 1.0 - h], axis=-1)


def _ia_formula(W, V):
    score = W[..., 0, :] @ V.T
    return score / score.sum(axis=-1, keepdims=True)


def crp_describe(w, m: int | None = None) -> np.ndarray:
    w = param_point(w, k=m, ell=1)
    return w[0].copy()


def crpside_describe(w, env: EnvironmentSnapshot | np.ndarray, model: SideInfoModel = SideInfoModel()) -> np.ndarray:
    v = env.side_info if isinstance(env, EnvironmentSnapshot) else env
    w = param_point(w)
    f = model(v)
    if f.shape[-1] != w.shape[0]:
        raise DimensionMismatch(f"side-info model gives {f.shape[-1]} weights for {w.shape[0]} blocks")
    return f @ w


def ma_describe(w, env: EnvironmentSnapshot, alloc: AllocationFunction, t: int | None = None) -> np.ndarray:
    w = param_point(w, ell=2)
    if env.price_history is None or len(env.price_history) != w.shape[1]:
        raise InsufficientHistory(f"need a {w.shape[1]}-day price history")
    return _ma_formula(w, env.price_history, alloc, env.t if t is None else t)


def sr_describe(w, env: EnvironmentSnapshot, alloc: AllocationFunction, margin: MarginSpec | None = None,
                t: int | None = None) -> np.ndarray:
    w = param_point(w, ell=1)
    if len(env.min_history) != w.shape[1] or len(env.max_history) != w.shape[1]:
        raise InsufficientHistory(f"need {w.shape[1]}-day min/max histories")
    if margin is not None and alloc.family == "sr" and alloc.alpha != margin.alpha:
        alloc = AllocationFunction(alloc.kind, "sr", margin.alpha)
    return _sr_formula(w, env.min_history, env.max_history, env.current_price, alloc,
                       env.t if t is None else t)


def ia_describe(w, env: EnvironmentSnapshot | np.ndarray) -> np.ndarray:
    V = env.indicators if isinstance(env, EnvironmentSnapshot) else np.asarray(env, dtype=float)
    w = param_point(w, ell=1)
    if V.ndim != 2 or V.shape[1] != w.shape[1]:
        raise DimensionMismatch(f"indicators must be (m, {w.shape[1]})")
    return _ia_formula(w, V)


# ---------------------------------------------------------------------------
# strategy objects
# ---------------------------------------------------------------------------

class Strategy:
    """Common interface. Subclasses set ``meta`` and implement ``_batch``."""

    meta: StrategyMeta
    #: days of environment available; ``None`` means the strategy ignores the environment
    n_days: int | None = None
    #: market the strategy trades, when it owns its data
    market: MarketSeries | None = None

    @property
    def name(self):
        return self.meta.name

    def _check_day(self, t):
        if t < 0 or (self.n_days is not None and t >= self.n_days):
            raise InsufficientHistory(f"{self.name}: no environment for day {t}")

    def describe_batch(self, W, t: int) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        if W.shape[-2:] != (self.meta.ell, self.meta.k):
            raise DimensionMismatch(f"{self.name}: parameters must have shape (..., {self.meta.ell}, "
                                    f"{self.meta.k}), got {W.shape}")
        self._check_day(t)
        return self._batch(W, t)

    def describe(self, w, t: int) -> np.ndarray:
        w = param_point(w, k=self.meta.k, ell=self.meta.ell)
        return self.describe_batch(w, t)

    def snapshot(self, t: int) -> EnvironmentSnapshot | None:
        return None

    def _batch(self, W, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.meta})"


class CRP(Strategy):
    """Constantly rebalanced portfolio: the description is ``w`` itself."""

    def __init__(self, m: int):
        self.meta = StrategyMeta("crp", k=m, ell=1, m=m, derivative_bound=1.0, second_partials_zero=True)

    def _batch(self, W, t):
        return W[..., 0, :].copy()


class CRPSide(Strategy):
    """CRP with side information: a day-dependent convex mix of ``ell`` portfolios.

    ``side_info`` has one row per market day.
    """

    def __init__(self, m: int, side_info, model: SideInfoModel = SideInfoModel()):
        side = np.asarray(side_info, dtype=float)
        if side.ndim != 2:
            raise DimensionMismatch("side_info must be (days, states)")
        self.side_info = side
        self.model = model
        self.mix = model(side)  # (days, ell)
        self.n_days = side.shape[0]
        self.meta = StrategyMeta("crpside", k=m, ell=side.shape[1], m=m, derivative_bound=1.0,
                                 second_partials_zero=True)

    @classmethod
    def from_prices(cls, table, states: int = 2, model: SideInfoModel = SideInfoModel(), labels=()):
        """Side information from average momentum ``mean_i p[t,i] / p[t-j,i]`` for ``j = 1..states``.

        Returns a strategy whose ``market`` covers price days ``states .. T-1``.
        """
        table = np.asarray(table, dtype=float)
        T = table.shape[0]
        if T <= states + 1:
            raise InsufficientHistory(f"need more than {states + 1} prices")
        days = np.arange(states, T - 1)
        side = np.stack([(table[days] / table[days - j]).mean(axis=1) for j in range(1, states + 1)], axis=1)
        strat = cls(table.shape[1], side, model)
        strat.market = MarketSeries(table[days + 1] / table[days], tuple(labels) or (), source="ingested")
        return strat

    def snapshot(self, t):
        self._check_day(t)
        k = 1
        one = np.ones(k)
        return EnvironmentSnapshot(t, one, one, one, 1.0, None, self.side_info[t])

    def _batch(self, W, t):
        return np.einsum("j,...jm->...m", self.mix[t], W)


class _TradingStrategy(Strategy):
    """Shared plumbing for single-stock strategies with a ``k``-day window.

    Market day ``t`` corresponds to price index ``t + k``: the first ``k``
    prices only seed the history.
    """

    def __init__(self, prices, k: int, margin: MarginSpec, on_breach: str = "raise"):
        if not isinstance(prices, PriceSeries):
            prices = PriceSeries("stock", np.asarray(prices, dtype=float))
        if k < 2:
            raise ValueError("window k must be >= 2")
        if len(prices) < k + 2:
            raise InsufficientHistory(f"need at least {k + 2} prices for a {k}-day window")
        self.prices = prices
        self.k = k
        self.margin = margin
        # no position is held while the window fills, so only moves from price k on are traded
        traded = PriceSeries(prices.ticker, prices.prices[k:], prices.dates[k:])
        self.market = trading_market(traded, margin, on_breach=on_breach)
        self.n_days = self.market.n_days
        p = prices.prices
        snaps = [normalize_environment(p, k, t + k) for t in range(self.n_days)]
        self._hist = np.array([s.price_history for s in snaps])
        self._lo = np.array([s.min_history for s in snaps])
        self._hi = np.array([s.max_history for s in snaps])
        self._p = np.array([s.current_price for s in snaps])

    def snapshot(self, t):
        self._check_day(t)
        return normalize_environment(self.prices.prices, self.k, t + self.k)


class MovingAverage(_TradingStrategy):
    """Moving-average cross-over with learned fast/slow weights ``(w_F, w_S)``."""

    def __init__(self, prices, k: int, alloc: AllocationFunction | str = "line",
                 margin: MarginSpec = MarginSpec(1.0), on_breach: str = "raise"):
        super().__init__(prices, k, margin, on_breach)
        self.alloc = alloc if isinstance(alloc, AllocationFunction) else AllocationFunction(alloc, "ma")
        if self.alloc.family != "ma":
            raise ValueError("moving average needs an 'ma' allocation function")
        bound = 0.5 if self.alloc.continuous else math.inf
        self.meta = StrategyMeta(f"ma[{k}]:{self.alloc.kind}", k=k, ell=2, m=2, derivative_bound=bound,
                                 second_partials_zero=self.alloc.affine)

    def _batch(self, W, t):
        return _ma_formula(W, self._hist[t], self.alloc, t)


class SupportResistance(_TradingStrategy):
    """Support/resistance breakout with levels ``w . min_history`` and ``w . max_history``."""

    def __init__(self, prices, k: int, alloc: AllocationFunction | str = "plane",
                 margin: MarginSpec = MarginSpec(1.0), on_breach: str = "raise"):
        super().__init__(prices, k, margin, on_breach)
        kind = alloc.kind if isinstance(alloc, AllocationFunction) else alloc
        self.alloc = AllocationFunction(kind, "sr", margin.alpha)
        bound = 0.5 if self.alloc.continuous else math.inf
        self.meta = StrategyMeta(f"sr[{k}]:{kind}", k=k, ell=1, m=2, derivative_bound=bound,
                                 second_partials_zero=self.alloc.affine)

    def _batch(self, W, t):
        return _sr_formula(W, self._lo[t], self._hi[t], self._p[t], self.alloc, t)


class IndicatorAggregation(Strategy):
    """Weight each instrument by the ``w``-average of its ``k`` normalized indicators.

    ``indicators`` has shape ``(days, m, k)`` and is normalized per day and column.
    """

    def __init__(self, indicators):
        raw = np.asarray(indicators, dtype=float)
        if raw.ndim != 3:
            raise DimensionMismatch("indicators must be (days, m, k)")
        self.indicators = normalize_indicators(raw)
        self.n_days, m, k = raw.shape
        self.meta = StrategyMeta(f"ia[{k}]", k=k, ell=1, m=m, derivative_bound=float(k + m * k * k),
                                 second_partials_zero=False)

    @classmethod
    def from_prices(cls, table, k: int, labels=()):
        """Momentum indicators ``p[t,i] / p[t-j,i]`` for ``j = 1..k``; market covers price days ``k..T-1``."""
        table = np.asarray(table, dtype=float)
        T = table.shape[0]
        if T <= k + 1:
            raise InsufficientHistory(f"need more than {k + 1} prices")
        days = np.arange(k, T - 1)
        ind = np.stack([table[days] / table[days - j] for j in range(1, k + 1)], axis=2)
        strat = cls(ind)
        strat.market = MarketSeries(table[days + 1] / table[days], tuple(labels) or (), source="ingested")
        return strat

    def snapshot(self, t):
        self._check_day(t)
        one = np.ones(1)
        return EnvironmentSnapshot(t, one, one, one, 1.0, self.indicators[t], None)

    def _batch(self, W, t):
        return _ia_formula(W, self.indicators[t])


# ---------------------------------------------------------------------------
# numeric derivative checks
# ---------------------------------------------------------------------------

def interior_points(rng: np.random.Generator, n: int, ell: int, k: int, margin: float = 0.02) -> np.ndarray:
    """Uniform simplex points pulled toward the center so every coordinate exceeds ``margin``."""
    raw = rng.dirichlet(np.ones(k), size=(n, ell))
    return (1.0 - k * margin) * raw + margin


def _free_direction(ell: int, k: int, block: int, j: int) -> np.ndarray:
    d = np.zeros((ell, k))
    d[block, j] = 1.0
    d[block, k - 1] = -1.0
    return d


@dataclass(frozen=True)
class DerivativeReport:
    strategy: str
    declared_bound: float
    observed: float
    eligible: bool
    ok: bool
    worst: tuple


def derivative_bound_check(strategy: Strategy, trials: int = 200, days=None, seed: int = 0,
                           h: float = 1e-6, floor: FloorSchedule | None = None) -> DerivativeReport:
    """Central finite differences of every description component in every free coordinate.

    Reports ``max |dS_ti/dw| / (t + 1)`` over random interior points and days
    against the declared constant. Step allocations are reported ineligible.
    """
    meta = strategy.meta
    if not meta.universalizable:
        return DerivativeReport(meta.name, meta.derivative_bound, float("nan"), False, True, ())
    rng = np.random.default_rng(seed)
    if days is None:
        n = strategy.n_days if strategy.n_days is not None else 50
        days = range(n)
    days = list(days)
    pts = interior_points(rng, trials, meta.ell, meta.k)
    worst, where = 0.0, ()
    for trial, w in enumerate(pts):
        t = days[rng.integers(len(days))]
        for b in range(meta.ell):
            for j in range(meta.k - 1):
                d = _free_direction(meta.ell, meta.k, b, j)
                plus = strategy.describe_batch(w + h * d, t)
                minus = strategy.describe_batch(w - h * d, t)
                if floor is not None:
                    plus, minus = floor.apply(plus, t), floor.apply(minus, t)
                fd = np.abs(plus - minus) / (2 * h)
                ratio = float(fd.max()) / (t + 1)
                if ratio > worst:
                    worst, where = ratio, (t, int(fd.argmax()), b, j)
    ok = worst <= meta.derivative_bound * (1 + 1e-6) + 1e-9
    return DerivativeReport(meta.name, meta.derivative_bound, worst, True, ok, where)


def max_second_partial(strategy: Strategy, trials: int = 20, seed: int = 0, h: float = 1e-4,
                       days=None) -> float:
    """Largest |mixed second difference| of the description over random points and coordinate pairs."""
    meta = strategy.meta
    rng = np.random.default_rng(seed)
    if days is None:
        n = strategy.n_days if strategy.n_days is not None else 10
        days = range(n)
    days = list(days)
    dirs = [_free_direction(meta.ell, meta.k, b, j) for b in range(meta.ell) for j in range(meta.k - 1)]
    worst = 0.0
    for w in interior_points(rng, trials, meta.ell, meta.k, margin=0.05):
        t = days[rng.integers(len(days))]
        for a in range(len(dirs)):
            for b in range(a, len(dirs)):
                da, db = h * dirs[a], h * dirs[b]
                val = (strategy.describe_batch(w + da + db, t) - strategy.describe_batch(w + da - db, t)
                       - strategy.describe_batch(w - da + db, t) + strategy.describe_batch(w - da - db, t))
                worst = max(worst, float(np.abs(val).max()) / (4 * h * h))
    return worst
