"""Command-line front end: ``backtest``, ``gen-market``, ``diagnose``, ``compare``.

Configuration is a flat ``key = value`` file; command-line flags override the
file, which overrides the defaults. Every run prints ``key=value`` summary
lines on stdout and writes its data files into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 diagnostic
threshold exceeded, 5 grid too large for an exact computation.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, GridTooLarge, UniversalizeError
from .geometry import ParamSpace, _block_indices, build_grid
from .market import (
    MarginSpec,
    MarketSeries,
    PriceSeries,
    constant_market,
    cover_market,
    ingest_csv,
    lognormal_market,
    write_csv,
)
from .sampler import (
    EXACT_TV_CAP,
    DampingSpec,
    SamplerBudget,
    TargetDistribution,
    log_concavity_check,
    sampled_universal_run,
    theoretical_budget,
    write_diagnostics,
)
from .strategies import (
    CRP,
    CRPSide,
    FloorSchedule,
    IndicatorAggregation,
    MovingAverage,
    SideInfoModel,
    SupportResistance,
    derivative_bound_check,
)
from .universal import (
    DynamicSchedule,
    cumulative_return,
    dynamic_universal_run,
    grid_descriptions,
    hindsight_optimum,
    regret,
    universal_run,
    write_ledger,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_THRESHOLD, EXIT_GRID = 0, 2, 3, 4, 5
GRID_CAP = 2_000_000

MODES = ("fixed", "exact", "sampled", "dynamic")
MARKETS = ("cover", "constant", "iid-lognormal", "csv")
STRATEGIES = ("crp", "crpside", "ma", "sr", "ia")


@dataclass
class RunConfig:
    # market
    market: str = "cover"
    csv: str | None = None
    days: int = 20
    m: int = 2
    mu: float = 0.0
    sigma: float = 0.05
    ticker: str | None = None
    # strategy
    strategy: str = "crp"
    k: int = 2
    ell: int = 2
    alloc: str | None = None
    alpha: float = 1.0
    side_info: str = "proportional"
    on_breach: str = "raise"
    w: str | None = None
    # universalization
    mode: str = "exact"
    grid_delta: float = 0.01
    epsilon: float | None = None
    interval: int | None = None
    # sampler
    samples: int = 10_000
    burn_in: int = 100_000
    chains: int = 8
    thin: int = 1
    damping: bool = True
    damping_sigma: float | None = None
    damping_gamma: float | None = None
    seed: int | None = None
    # diagnostics
    tv_threshold: float = 0.1
    tv_cap: int = EXACT_TV_CAP
    nu: float = 1.0
    kappa: float = 1.0
    trials: int = 50
    # output
    out: str = "out"
    generator: str | None = None

    def validate(self, command: str) -> "RunConfig":
        if self.market not in MARKETS:
            raise ConfigError(f"market must be one of {MARKETS}, got {self.market!r}")
        if self.market == "csv" and not self.csv:
            raise ConfigError("market=csv needs a 'csv' path")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epsilon is not None and not (0 < self.epsilon < 1):
            raise ConfigError("epsilon must lie in (0, 1)")
        if not self.grid_delta > 0:
            raise ConfigError("grid_delta must be positive")
        if self.days < 1 or self.m < 1:
            raise ConfigError("days and m must be >= 1")
        if command == "backtest" and self.mode == "fixed" and not self.w:
            raise ConfigError("mode=fixed needs parameters 'w'")
        if command == "backtest" and self.mode == "dynamic" and not self.interval:
            raise ConfigError("mode=dynamic needs an 'interval' length")
        if (command in ("diagnose", "compare") or self.mode == "sampled") and self.seed is None:
            raise ConfigError("sampled runs need a seed")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    f = _FIELDS[key]
    typ = str(f.type)
    raw = raw.strip()
    if raw.lower() in ("", "none") and "None" in typ:
        return None
    try:
        if typ.startswith("bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected key = value")
        key, val = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text, str(path)))
    for key, val in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, val) if isinstance(val, str) else val
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def build_price_table(cfg: RunConfig):
    """``(prices (T, m), tickers)`` from the configured source."""
    if cfg.market == "csv":
        path = Path(cfg.csv)
        if not path.exists():
            raise DataError(f"market file not found: {path}")
        series = ingest_csv(path)
        return np.column_stack([s.prices for s in series]), [s.ticker for s in series]
    if cfg.market == "cover":
        mk = cover_market(cfg.days)
    elif cfg.market == "constant":
        mk = constant_market(cfg.days, cfg.m)
    else:
        mk = lognormal_market(cfg.days, cfg.m, cfg.mu, cfg.sigma, seed=0 if cfg.seed is None else cfg.seed)
    return mk.to_prices(1.0), list(mk.labels)


def build_strategy(cfg: RunConfig):
    """Strategy and the market it trades."""
    table, tickers = build_price_table(cfg)
    if table.shape[0] < 2:
        raise DataError("need at least two price rows")
    if cfg.strategy == "crp":
        strat = CRP(table.shape[1])
        return strat, MarketSeries(table[1:] / table[:-1], tuple(tickers), source=cfg.market)
    if cfg.strategy == "crpside":
        strat = CRPSide.from_prices(table, cfg.ell, SideInfoModel(cfg.side_info), tickers)
        return strat, strat.market
    if cfg.strategy == "ia":
        strat = IndicatorAggregation.from_prices(table, cfg.k, tickers)
        return strat, strat.market
    col = 0
    if cfg.ticker is not None:
        if cfg.ticker not in tickers:
            raise ConfigError(f"ticker {cfg.ticker!r} not in {tickers}")
        col = tickers.index(cfg.ticker)
    prices = PriceSeries(tickers[col], table[:, col])
    margin = MarginSpec(cfg.alpha)
    if cfg.strategy == "ma":
        strat = MovingAverage(prices, cfg.k, cfg.alloc or "line", margin, cfg.on_breach)
    else:
        strat = SupportResistance(prices, cfg.k, cfg.alloc or "plane", margin, cfg.on_breach)
    return strat, strat.market


def _parse_w(text: str):
    try:
        return np.array([[float(v) for v in block.split(",")] for block in text.split(";")])
    except ValueError:
        raise ConfigError(f"bad parameter point {text!r}") from None


def build_grid_for(cfg: RunConfig, strategy):
    space = ParamSpace(strategy.meta.k, strategy.meta.ell)
    per_block = len(_block_indices(space.k - 1, cfg.grid_delta))
    if per_block ** space.ell > GRID_CAP:
        raise ConfigError(f"grid_delta={cfg.grid_delta} gives about {per_block ** space.ell} points "
                          f"(cap {GRID_CAP}); use a coarser spacing")
    return build_grid(space, cfg.grid_delta)


def build_floor(cfg: RunConfig):
    return None if cfg.epsilon is None else FloorSchedule(cfg.epsilon)


def build_budget(cfg: RunConfig) -> SamplerBudget:
    return SamplerBudget(cfg.samples, cfg.burn_in, cfg.chains, cfg.thin)


def build_damping(cfg: RunConfig, k: int):
    if not cfg.damping:
        return None
    d = DampingSpec.default(cfg.grid_delta, k)
    return DampingSpec(cfg.damping_gamma or d.Gamma, cfg.damping_sigma or d.sigma, k)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit(summary: dict, stream=None):
    stream = stream or sys.stdout
    for key, val in summary.items():
        print(f"{key}={_fmt(val)}", file=stream)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_backtest(cfg: RunConfig) -> dict:
    strat, market = build_strategy(cfg)
    floor = build_floor(cfg)
    out = _outdir(cfg)
    summary = {"command": "backtest", "mode": cfg.mode, "strategy": strat.name, "days": market.n_days}
    grid = build_grid_for(cfg, strat)
    summary["grid_points"] = len(grid)
    if cfg.mode == "fixed":
        ledger = cumulative_return(strat, _parse_w(cfg.w), market, floor)
        best = hindsight_optimum(strat, grid, market, floor).running_best_log
        ledger = dataclasses.replace(ledger, benchmark_log_wealth=best)
    elif cfg.mode == "exact":
        ledger = universal_run(strat, grid, market, floor)
    elif cfg.mode == "dynamic":
        ledger = dynamic_universal_run(strat, grid, market, DynamicSchedule.uniform(market.n_days, cfg.interval),
                                       floor)
    else:
        run = sampled_universal_run(strat, grid, market, build_budget(cfg), cfg.seed, floor,
                                    build_damping(cfg, strat.meta.k))
        ledger = run.ledger
        summary["diagnostics_file"] = str(write_diagnostics(out / "diagnostics.csv", run.diagnostics))
    path = write_ledger(out / "ledger.csv", ledger)
    gaps = regret(ledger, ledger.benchmark_log_wealth)
    summary.update(final_wealth=ledger.final_wealth, log_wealth=float(ledger.log_wealth[-1]),
                   log_normalized=float(ledger.log_normalized[-1]) if ledger.n_days else 0.0,
                   best_log_wealth=float(ledger.benchmark_log_wealth[-1]),
                   regret=float(gaps[-1]) if ledger.n_days else 0.0, ledger_file=str(path))
    return summary


def run_gen_market(cfg: RunConfig) -> dict:
    gen = cfg.generator or cfg.market
    if gen not in ("cover", "constant", "iid-lognormal"):
        raise ConfigError(f"generator must be cover, constant or iid-lognormal, got {gen!r}")
    if gen == "iid-lognormal" and cfg.seed is None:
        raise ConfigError("iid-lognormal generation needs a seed")
    table, tickers = build_price_table(dataclasses.replace(cfg, market=gen))
    path = write_csv(_outdir(cfg) / "market.csv", table, tickers)
    return {"command": "gen-market", "generator": gen, "days": table.shape[0] - 1, "instruments": table.shape[1],
            "market_file": str(path)}


def run_diagnose(cfg: RunConfig) -> tuple[dict, int]:
    strat, market = build_strategy(cfg)
    floor = build_floor(cfg)
    out = _outdir(cfg)
    grid = build_grid_for(cfg, strat)
    if len(grid) > cfg.tv_cap:
        raise GridTooLarge(f"exact TV needs |grid| <= {cfg.tv_cap}, got {len(grid)}")
    run = sampled_universal_run(strat, grid, market, build_budget(cfg), cfg.seed, floor,
                                build_damping(cfg, strat.meta.k), exact_tv=True)
    write_diagnostics(out / "diagnostics.csv", run.diagnostics)
    tvs = [r[4] for r in run.diagnostics if r[1] == "all"]
    lc = log_concavity_check(strat, market, trials=cfg.trials, seed=cfg.seed)
    deriv = derivative_bound_check(strat, trials=min(cfg.trials, 50), seed=cfg.seed, floor=floor)
    eps = cfg.epsilon if cfg.epsilon is not None else 0.5
    t_last = max(market.n_days - 1, 1)
    tb = theoretical_budget(strat.meta, market.m, t_last, strat.meta.k, strat.meta.ell, eps, cfg.nu, cfg.kappa)
    report = {
        "strategy": strat.name,
        "grid_points": len(grid),
        "universalizable": strat.meta.universalizable,
        "derivative_bound": strat.meta.derivative_bound,
        "derivative_observed": deriv.observed,
        "derivative_ok": deriv.ok,
        "log_concavity_eligible": lc.eligible,
        "log_concavity_max_eigenvalue": lc.max_eigenvalue,
        "log_concavity_pass": lc.passed,
        "tv_max": max(tvs),
        "tv_threshold": cfg.tv_threshold,
        "tv_pass": max(tvs) <= cfg.tv_threshold,
    }
    report.update({f"theoretical_{k}": v for k, v in tb.as_dict().items() if k not in ("theoretical", "note")})
    report["theoretical_day"] = t_last
    report["theoretical_note"] = tb.note
    path = out / "diagnose.txt"
    with path.open("w", encoding="utf-8") as fh:
        for key, val in report.items():
            fh.write(f"{key}={_fmt(val)}\n")
    summary = {"command": "diagnose", "diagnostics_file": str(out / "diagnostics.csv"), "report_file": str(path),
               "tv_max": report["tv_max"], "tv_pass": report["tv_pass"],
               "log_concavity_eligible": lc.eligible, "log_concavity_pass": lc.passed}
    return summary, (EXIT_OK if report["tv_pass"] else EXIT_THRESHOLD)


@dataclass(frozen=True)
class Comparison:
    exact: np.ndarray
    sampled: np.ndarray
    target: np.ndarray

    @property
    def deviation(self) -> np.ndarray:
        """Per-day largest absolute component gap between sampled and exact descriptions."""
        return np.abs(self.sampled - self.exact).max(axis=1)

    @property
    def sampling_error(self) -> np.ndarray:
        """Per-day gap between the sampled average and its own (damped) target expectation."""
        return np.abs(self.sampled - self.target).max(axis=1)


def compare_modes(strategy, grid, market, budget: SamplerBudget, seed: int, floor=None, damping=None,
                  cap: int = EXACT_TV_CAP) -> Comparison:
    """Exact and sampled universal descriptions side by side, day by day.

    ``target`` holds the exact expectation under the walk's own stationary
    distribution (including any damping), which isolates the sampling error.
    """
    if len(grid) > cap:
        raise GridTooLarge(f"exact comparison needs |grid| <= {cap}, got {len(grid)}")
    exact = universal_run(strategy, grid, market, floor).descriptions
    sampled = sampled_universal_run(strategy, grid, market, budget, seed, floor, damping).ledger.descriptions
    log_damp = 0.0 if damping is None else damping.log_factor(grid.points)
    target = np.empty_like(exact)
    logR = np.zeros(len(grid))
    for t in range(market.n_days):
        S = grid_descriptions(strategy, grid, t, floor)
        target[t] = TargetDistribution(grid, logR + log_damp + grid.log_volume).expectation(S)
        logR += np.log(S @ market.returns[t])
    return Comparison(exact, sampled, target)


def run_compare(cfg: RunConfig) -> dict:
    strat, market = build_strategy(cfg)
    grid = build_grid_for(cfg, strat)
    cmp = compare_modes(strat, grid, market, build_budget(cfg), cfg.seed, build_floor(cfg),
                        build_damping(cfg, strat.meta.k), cap=cfg.tv_cap)
    out = _outdir(cfg)
    path = out / "compare.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("day,component,exact,sampled,deviation\n")
        for t in range(market.n_days):
            for i in range(market.m):
                e, s = float(cmp.exact[t, i]), float(cmp.sampled[t, i])
                fh.write(f"{t},{i},{e!r},{s!r},{abs(s - e)!r}\n")
    return {"command": "compare", "strategy": strat.name, "days": market.n_days, "grid_points": len(grid),
            "max_deviation": float(cmp.deviation.max()), "max_sampling_error": float(cmp.sampling_error.max()),
            "compare_file": str(path)}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="universalize", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("backtest", "gen-market", "diagnose", "compare"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--mode", choices=MODES)
        s.add_argument("--grid-delta", type=float)
        s.add_argument("--samples", type=int)
        s.add_argument("--burn-in", type=int)
        s.add_argument("--chains", type=int)
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key (repeatable)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    try:
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            overrides[key.strip()] = val
        for key in ("seed", "out", "mode", "grid_delta", "samples", "burn_in", "chains"):
            val = getattr(args, key)
            if val is not None:
                overrides[key] = val
        cfg = load_config(args.config, overrides).validate(args.command)
        code = EXIT_OK
        if args.command == "backtest":
            summary = run_backtest(cfg)
        elif args.command == "gen-market":
            summary = run_gen_market(cfg)
        elif args.command == "diagnose":
            summary, code = run_diagnose(cfg)
        else:
            summary = run_compare(cfg)
        summary["exit_code"] = code
        emit(summary)
        return code
    except GridTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRID
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UniversalizeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
