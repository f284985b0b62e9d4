"""Metropolis sampling of grid parameters in proportion to their past returns.

The target on day ``t`` is ``pi_t(w) ~ R_t(w) * prod_ij f_ij(w) * vol(w)`` over
the grid: cumulative return, an edge damping factor and the in-space cell
fraction (so the sampled average converges to the same quadrature as the exact
universalizer). The walk proposes one of the ``2 (k-1) ell`` axis neighbours
uniformly, stays put when the proposal leaves the grid, and accepts with
``min(1, pi(w') / pi(w))`` evaluated in log space.

Random numbers come from a counter-based SplitMix64 stream keyed by
``(seed, day, chain)`` and indexed by the chain's step count, so every chain
is reproducible on its own and chains can run in parallel.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit, uint64
from scipy.special import logsumexp

from .errors import BudgetTooSmall, GridTooLarge
from .geometry import GridSpec
from .market import MarketSeries
from .strategies import FloorSchedule, Strategy, StrategyMeta, interior_points
from .universal import WealthLedger, _check, grid_descriptions

log = logging.getLogger(__name__)

EXACT_TV_CAP = 200_000


# ---------------------------------------------------------------------------
# random stream
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _draw(key, step):
    return _mix64(key + (uint64(step) + uint64(1)) * uint64(0x9E3779B97F4A7C15))


@njit(cache=True)
def _key(seed, day, chain):
    g = uint64(0x9E3779B97F4A7C15)
    k = _mix64(seed + g)
    k = _mix64((k ^ (day * uint64(0xD1B54A32D192ED03))) + g)
    return _mix64((k ^ (chain * uint64(0xABC98388FB8FAC03))) + g)


def stream_key(seed: int, day: int, chain: int) -> np.uint64:
    """Key of the independent stream for one chain on one day."""
    if seed < 0 or day < 0 or chain < 0:
        raise ValueError("seed, day and chain must be nonnegative")
    return np.uint64(_key(np.uint64(seed % 2**64), np.uint64(day), np.uint64(chain)))


@njit(cache=True)
def _slot_and_uniform(u, n_slots):
    slot = ((u & uint64(0xFFFFFFFF)) * uint64(n_slots)) >> uint64(32)
    uni = (float(u >> uint64(32)) + 0.5) * 2.3283064365386963e-10
    return np.int64(slot), uni


@njit(cache=True, nogil=True)
def _walk(pos, key, step, burn_in, n_keep, thin, logw, table, out):
    n_slots = table.shape[1]
    accepted = 0
    countdown = burn_in + thin
    j = 0
    for _ in range(burn_in + n_keep * thin):
        u = _draw(key, step)
        step += uint64(1)
        slot, uni = _slot_and_uniform(u, n_slots)
        nxt = table[pos, slot]
        if nxt >= 0:
            d = logw[nxt] - logw[pos]
            if d >= 0.0 or math.log(uni) < d:
                pos = nxt
                accepted += 1
        countdown -= 1
        if countdown == 0:
            out[j] = pos
            j += 1
            countdown = thin
    return pos, step, accepted


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DampingSpec:
    """Edge damping ``f_ij(w) = exp(Gamma * min(w_ij - sigma, 0))``."""

    Gamma: float
    sigma: float
    k: int | None = None

    def __post_init__(self):
        if not self.Gamma > 2:
            raise ValueError(f"Gamma must exceed 2, got {self.Gamma!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.k is not None and not self.sigma < 1.0 / self.k:
            raise ValueError(f"sigma must be below 1/k = {1.0 / self.k!r}")

    @classmethod
    def default(cls, delta: float, k: int) -> "DampingSpec":
        """``sigma = delta / 2`` (kept below ``1/k``), ``Gamma = min(10 / sigma, 1e6)``."""
        sigma = min(delta / 2.0, 0.5 / k)
        return cls(max(min(10.0 / sigma, 1e6), 2.0 + 1e-9), sigma, k)

    def log_factor(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self.Gamma * np.minimum(p - self.sigma, 0.0).sum(axis=(-2, -1))


def damping_factor(w, spec: DampingSpec) -> float:
    """Product of edge factors over every coordinate; 1 exactly when all coordinates are at least sigma."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[None]
    return float(np.exp(spec.log_factor(w)))


@dataclass(frozen=True)
class SamplerBudget:
    """Runtime sample budget.

    ``n_samples`` is the pooled count across chains. ``thin`` keeps every
    ``thin``-th post-burn-in state. ``tv_target``, ``smoothness`` and
    ``confidence`` are the accuracy targets the budget is meant to reach;
    they are recorded for reporting.
    """

    n_samples: int = 10_000
    burn_in: int = 100_000
    chains: int = 8
    thin: int = 1
    tv_target: float | None = None
    smoothness: float | None = None
    confidence: float | None = None
    min_samples: int = 1

    def __post_init__(self):
        for name in ("n_samples", "chains", "thin", "min_samples"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.tv_target is not None and not (0 < self.tv_target <= 1):
            raise ValueError("tv_target must lie in (0, 1]")
        if self.smoothness is not None and not self.smoothness > 0:
            raise ValueError("smoothness must be positive")
        if self.confidence is not None and not (0 < self.confidence < 1):
            raise ValueError("confidence must lie in (0, 1)")

    def per_chain(self) -> np.ndarray:
        base, extra = divmod(self.n_samples, self.chains)
        return np.array([base + (c < extra) for c in range(self.chains)], dtype=np.int64)


@dataclass(frozen=True)
class ChainState:
    position: int
    seed: int
    day: int = 0
    chain: int = 0
    step_count: int = 0

    @property
    def key(self) -> np.uint64:
        return stream_key(self.seed, self.day, self.chain)


@dataclass(frozen=True, eq=False)
class TargetDistribution:
    grid: GridSpec
    log_weights: np.ndarray
    normalizer: float = field(init=False)

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float)
        if lw.shape != (len(self.grid),):
            raise ValueError("one log weight per grid point required")
        if not np.all(np.isfinite(lw)):
            raise ValueError("log weights must be finite")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "normalizer", float(logsumexp(lw)))

    @classmethod
    def from_log_returns(cls, grid: GridSpec, log_returns, damping: DampingSpec | None = None,
                         cell_volume: bool = True) -> "TargetDistribution":
        lw = np.asarray(log_returns, dtype=float).copy()
        if damping is not None:
            lw += damping.log_factor(grid.points)
        if cell_volume:
            lw += grid.log_volume
        return cls(grid, lw)

    @classmethod
    def from_strategy(cls, strategy: Strategy, grid: GridSpec, market: MarketSeries, t: int,
                      floor: FloorSchedule | None = None, damping: DampingSpec | None = None,
                      cell_volume: bool = True) -> "TargetDistribution":
        """Target for day ``t`` from the (floored) returns of days ``0 .. t-1``."""
        from .universal import grid_log_returns
        return cls.from_log_returns(grid, grid_log_returns(strategy, grid, market, t, floor), damping,
                                    cell_volume)

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.normalizer)

    def expectation(self, values) -> np.ndarray:
        """Exact ``sum_g pi(g) values[g]``."""
        return self.probabilities() @ np.asarray(values, dtype=float)


# ---------------------------------------------------------------------------
# walking
# ---------------------------------------------------------------------------

def metropolis_step(chain: ChainState, target: TargetDistribution) -> ChainState:
    """One walk step; uses the same random draw as the compiled kernel."""
    table = target.grid.neighbor_table
    u = _draw(chain.key, np.uint64(chain.step_count))
    slot, uni = _slot_and_uniform(np.uint64(u), table.shape[1])
    pos = chain.position
    nxt = int(table[pos, slot])
    if nxt >= 0:
        d = target.log_weights[nxt] - target.log_weights[pos]
        if d >= 0 or math.log(uni) < d:
            pos = nxt
    return replace(chain, position=pos, step_count=chain.step_count + 1)


def transition_probability(target: TargetDistribution, u: int, v: int) -> float:
    """``P(u -> v)`` for distinct grid points ``u, v``."""
    table = target.grid.neighbor_table
    hits = int(np.count_nonzero(table[u] == v))
    if hits == 0 or u == v:
        return 0.0
    lw = target.log_weights
    return hits / table.shape[1] * min(1.0, math.exp(lw[v] - lw[u]))


def detailed_balance_residual(target: TargetDistribution) -> float:
    """Largest ``|pi(u) P(u->v) - pi(v) P(v->u)|`` over every neighbouring pair."""
    pi = target.probabilities()
    worst = 0.0
    table = target.grid.neighbor_table
    for u in range(len(pi)):
        for v in table[u]:
            if v > u:
                worst = max(worst, abs(pi[u] * transition_probability(target, u, int(v))
                                       - pi[v] * transition_probability(target, int(v), u)))
    return worst


@dataclass(frozen=True, eq=False)
class ChainRun:
    """Post-burn-in sample positions per chain and the final chain states."""

    samples: list
    acceptance: np.ndarray
    states: list

    def pooled(self) -> np.ndarray:
        return np.concatenate(self.samples)


def run_chains(target: TargetDistribution, budget: SamplerBudget, seed: int, day: int = 0,
               starts=None) -> ChainRun:
    """Run ``budget.chains`` independent walks and keep their thinned post-burn-in positions."""
    C = budget.chains
    if starts is None:
        starts = uniform_starts(len(target.grid), C, seed, day)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.shape != (C,) or np.any(starts < 0) or np.any(starts >= len(target.grid)):
        raise ValueError("need one in-grid start position per chain")
    counts = budget.per_chain()
    keys = np.array([stream_key(seed, day, c) for c in range(C)], dtype=np.uint64)
    out = [np.full(int(counts[c]), -1, dtype=np.int64) for c in range(C)]
    logw, table = target.log_weights, target.grid.neighbor_table

    def one(c):
        return _walk(np.int64(starts[c]), keys[c], np.uint64(0), np.int64(budget.burn_in), np.int64(counts[c]),
                     np.int64(budget.thin), logw, table, out[c])

    workers = min(C, os.cpu_count() or 1)
    if workers > 1 and budget.burn_in + int(counts.max()) * budget.thin > 100_000:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(C)))
    else:
        results = [one(c) for c in range(C)]
    total = budget.burn_in + counts * budget.thin
    acc = np.array([r[2] for r in results]) / np.maximum(total, 1)
    samples = out
    states = [ChainState(int(results[c][0]), seed, day, c, int(results[c][1])) for c in range(C)]
    return ChainRun(samples, acc, states)


def uniform_starts(grid_size: int, chains: int, seed: int, day: int) -> np.ndarray:
    rng = np.random.default_rng([seed, day, 0x5EED])
    return rng.integers(grid_size, size=chains)


def warm_start(pools, chains: int, grid_size: int, seed: int = 0, day: int = 0) -> np.ndarray:
    """Chain start positions drawn without replacement from earlier days' samples.

    ``pools`` is a sequence of position arrays (typically days ``t-1`` and
    ``t-2``). Chains that cannot be seeded from the pools start uniformly
    over the grid.
    """
    pooled = np.concatenate([np.asarray(p, dtype=np.int64) for p in pools]) if pools else np.zeros(0, np.int64)
    rng = np.random.default_rng([seed, day, 0x3A4])
    take = min(len(pooled), chains)
    starts = np.empty(chains, dtype=np.int64)
    if take:
        starts[:take] = pooled[rng.choice(len(pooled), size=take, replace=False)]
    if take < chains:
        if len(pooled):
            log.info("sample pool has %d positions for %d chains; starting the rest uniformly", take, chains)
        starts[take:] = rng.integers(grid_size, size=chains - take)
    return starts


@dataclass(frozen=True, eq=False)
class SampledDescription:
    description: np.ndarray
    run: ChainRun


def sample_descriptions(strategy: Strategy, target: TargetDistribution, budget: SamplerBudget, seed: int,
                        t: int, floor: FloorSchedule | None = None, starts=None,
                        descriptions: np.ndarray | None = None) -> SampledDescription:
    """Average ``S_t`` over walk samples from ``target``.

    ``descriptions`` may pass precomputed ``S_t`` over the grid.
    """
    if budget.n_samples < budget.min_samples:
        raise BudgetTooSmall(f"{budget.n_samples} samples is below the configured minimum {budget.min_samples}")
    S = grid_descriptions(strategy, target.grid, t, floor) if descriptions is None else descriptions
    run = run_chains(target, budget, seed, t, starts)
    counts = np.bincount(run.pooled(), minlength=len(target.grid))
    u = counts @ S / counts.sum()
    return SampledDescription(u, run)


# ---------------------------------------------------------------------------
# budgets from the analysis
# ---------------------------------------------------------------------------

def required_samples(m: int, t: int, epsilon: float, delta: float) -> int:
    """``ceil(8 m^2 (t+1)^8 / eps^4 * ln(2 m (t+1)^2 / delta))``."""
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    return math.ceil(8 * m * m * (t + 1) ** 8 / epsilon ** 4 * math.log(2 * m * (t + 1) ** 2 / delta))


def gamma_t(m: int, t: int, epsilon: float) -> float:
    """Per-day total-variation target ``eps^2 / (4 m (t+1)^4)``."""
    return epsilon ** 2 / (4 * m * (t + 1) ** 4)


@dataclass(frozen=True)
class TheoreticalBudget:
    """Worst-case quantities from the mixing analysis; reported, never used as runtime defaults."""

    c_prime: float
    gamma_t: float
    delta_t: float
    delta_prime_t: float
    sigma: float
    Gamma: float
    tau: float
    tau_prime: float
    theoretical: bool = True
    note: str = "theoretical - not used as runtime defaults"

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def grid_spacing_bound(nu: float, c_prime: float, m: int, t: int, k: int, ell: int) -> float:
    """Spacing ``nu / (3 c' m t^4 k ell)`` under which neighbouring returns differ by at most ``e^nu``."""
    denom = 3.0 * c_prime * m * t ** 4 * k * ell
    return math.inf if denom == 0 else nu / denom


def theoretical_budget(meta: StrategyMeta, m: int, t: int, k: int, ell: int, epsilon: float, nu: float,
                       kappa: float) -> TheoreticalBudget:
    """Spacing, damping and walk lengths implied by the analysis (with ``Gamma = 1 / sigma``)."""
    if not (0 < epsilon < 1) or nu <= 0 or kappa <= 0:
        raise ValueError("need 0 < epsilon < 1, nu > 0, kappa > 0")
    c_prime = 2.0 * meta.derivative_bound / epsilon
    g = gamma_t(m, t, epsilon)
    d = grid_spacing_bound(nu, c_prime, m, t, k, ell)
    sigma = grid_spacing_bound(g / 2, c_prime, m, t, k, ell) / k
    Gamma = 1.0 / sigma if sigma > 0 else math.inf
    d_prime = grid_spacing_bound(nu / Gamma, c_prime, m, t, k, ell) if math.isfinite(Gamma) else 0.0
    tau = k ** 7 * ell ** 6 * m ** 6 * float(t) ** 24 / (kappa * nu ** 2 * epsilon ** 4)
    return TheoreticalBudget(c_prime, g, d, d_prime, sigma, Gamma, tau, tau * (k * ell + t))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TVReport:
    tv: float
    bound_quantity: float
    n_samples: int
    exact: bool

    @property
    def l1(self) -> float:
        return 2.0 * self.tv


def total_variation(p, q) -> float:
    """``(1/2) sum |p - q|``."""
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def empirical_distribution(samples, size: int) -> np.ndarray:
    c = np.bincount(np.asarray(samples, dtype=np.int64), minlength=size).astype(float)
    return c / c.sum()


def tv_diagnostic(samples, target: TargetDistribution, exact: bool = True, cap: int = EXACT_TV_CAP) -> TVReport:
    """Total variation between walk samples and the target.

    Exact mode compares the pooled histogram with the enumerated target.
    Otherwise ``samples`` must be a list of per-chain arrays and the report is
    the largest TV between one chain's histogram and the rest pooled.
    ``bound_quantity`` is ``2 (sum |.|)^2 = 8 tv^2``, the form the mixing
    bound is stated in.
    """
    G = len(target.grid)
    if exact:
        if G > cap:
            raise GridTooLarge(f"exact TV needs |grid| <= {cap}, got {G}")
        pooled = np.concatenate(samples) if isinstance(samples, list) else np.asarray(samples)
        tv = total_variation(empirical_distribution(pooled, G), target.probabilities())
        n = len(pooled)
    else:
        if not isinstance(samples, list) or len(samples) < 2:
            raise ValueError("cross-chain TV needs at least two chains")
        tv = 0.0
        for c in range(len(samples)):
            rest = np.concatenate([s for i, s in enumerate(samples) if i != c])
            tv = max(tv, total_variation(empirical_distribution(samples[c], G), empirical_distribution(rest, G)))
        n = sum(len(s) for s in samples)
    return TVReport(tv, 2.0 * (2.0 * tv) ** 2, int(n), exact)


def ess(series) -> float:
    """Effective sample size via Geyer's initial positive sequence of autocorrelation pairs."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = x @ x / n
    if var <= 0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    for i in range(0, n - 1, 2):
        pair = acf[i] + acf[i + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


@dataclass(frozen=True)
class LogConcavityReport:
    strategy: str
    eligible: bool
    max_eigenvalue: float
    passed: bool
    n_points: int
    tolerance: float = 1e-6


def _log_return_sum(strategy, market, W):
    total = np.zeros(W.shape[0])
    for t in range(market.n_days):
        total += np.log(strategy.describe_batch(W, t) @ market.returns[t])
    return total


def numeric_hessian(strategy: Strategy, market: MarketSeries, w, h: float = 1e-3) -> np.ndarray:
    """Hessian of ``log R_n`` in free coordinates by Richardson-extrapolated central differences."""
    meta = strategy.meta
    dirs = []
    for b in range(meta.ell):
        for j in range(meta.k - 1):
            d = np.zeros((meta.ell, meta.k))
            d[b, j], d[b, meta.k - 1] = 1.0, -1.0
            dirs.append(d)
    D = len(dirs)
    w = np.asarray(w, dtype=float)

    def at(step):
        pts, keys = [w], []
        for a in range(D):
            for b in range(a, D):
                for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    pts.append(w + step * (sa * dirs[a] + sb * dirs[b]))
                keys.append((a, b))
        vals = _log_return_sum(strategy, market, np.array(pts))
        H = np.empty((D, D))
        for n, (a, b) in enumerate(keys):
            pp, pm, mp, mm = vals[1 + 4 * n: 5 + 4 * n]
            H[a, b] = H[b, a] = (pp - pm - mp + mm) / (4 * step * step)
        return H

    return (4.0 * at(h / 2) - at(h)) / 3.0


def log_concavity_check(strategy: Strategy, market: MarketSeries, trials: int = 50, seed: int = 0,
                        h: float = 1e-3, tol: float = 1e-6) -> LogConcavityReport:
    """Largest Hessian eigenvalue of ``log R_n`` over random interior points.

    Only strategies whose description is affine in the parameters are
    eligible; others are reported without being evaluated.
    """
    meta = strategy.meta
    if not meta.second_partials_zero:
        return LogConcavityReport(meta.name, False, float("nan"), False, 0, tol)
    _check(strategy, market)
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for w in interior_points(rng, trials, meta.ell, meta.k, margin=0.05):
        H = numeric_hessian(strategy, market, w, h)
        worst = max(worst, float(np.linalg.eigvalsh(H).max()))
    return LogConcavityReport(meta.name, True, worst, worst <= tol, trials, tol)


# ---------------------------------------------------------------------------
# sampled universalization
# ---------------------------------------------------------------------------

DIAGNOSTIC_COLUMNS = ("day", "chain", "acceptance_rate", "ess", "tv_exact")


@dataclass(frozen=True, eq=False)
class SampledRun:
    ledger: WealthLedger
    diagnostics: list
    samples: list = field(repr=False, default_factory=list)


def sampled_universal_run(strategy: Strategy, grid: GridSpec, market: MarketSeries, budget: SamplerBudget,
                          seed: int, floor: FloorSchedule | None = None, damping: DampingSpec | None = None,
                          warm: bool = True, exact_tv: bool = False, keep_samples: bool = False) -> SampledRun:
    """Universal strategy with each day's description estimated by the walk.

    Diagnostics rows are ``(day, chain, acceptance_rate, ess, tv_exact)`` per
    chain plus one pooled row with ``chain == "all"``; ``tv_exact`` is ``None``
    unless requested.
    """
    _check(strategy, market, grid)
    n = market.n_days
    daily = np.empty(n)
    desc = np.empty((n, market.m))
    bench = np.zeros(n + 1)
    logR = np.zeros(len(grid))
    log_damp = np.zeros(len(grid)) if damping is None else damping.log_factor(grid.points)
    pools: list = []
    rows: list = []
    kept: list = []
    for t in range(n):
        S = grid_descriptions(strategy, grid, t, floor)
        target = TargetDistribution(grid, logR + log_damp + grid.log_volume)
        starts = warm_start(pools[-2:], budget.chains, len(grid), seed, t) if warm else None
        res = sample_descriptions(strategy, target, budget, seed, t, floor, starts, descriptions=S)
        u = res.description
        desc[t] = u
        daily[t] = u @ market.returns[t]
        logR += np.log(S @ market.returns[t])
        bench[t + 1] = logR.max()
        pools.append(res.run.pooled())
        if keep_samples:
            kept.append(res.run.samples)
        tv = tv_diagnostic(res.run.samples, target, exact=True).tv if exact_tv else None
        for c, s in enumerate(res.run.samples):
            rows.append((t, c, float(res.run.acceptance[c]), ess(S[s, 0]), None))
        pooled_ess = float(sum(r[3] for r in rows[-budget.chains:]))
        rows.append((t, "all", float(res.run.acceptance.mean()), pooled_ess, tv))
    return SampledRun(WealthLedger.from_daily(daily, desc, bench), rows, kept)


def write_diagnostics(path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_COLUMNS)
        for day, chain, acc, e, tv in rows:
            w.writerow([day, chain, repr(float(acc)), repr(float(e)), "" if tv is None else repr(float(tv))])
    return path
