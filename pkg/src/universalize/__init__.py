"""Universalization of parameterized investment strategies.

Exact grid quadrature and Metropolis sampling turn a family of strategies
``S(w)`` into a single online strategy whose average log return tracks the
best fixed parameters in hindsight.
"""

from .errors import (
    BudgetTooSmall,
    ConfigError,
    DataError,
    DimensionMismatch,
    GridTooLarge,
    InsufficientHistory,
    LengthMismatch,
    MarginBreach,
    NonPositivePrice,
    ParseError,
    PartitionError,
    UniversalizeError,
)
from .geometry import (
    GridSpec,
    ParamSpace,
    ball_volume,
    build_grid,
    mc_simplex_volume,
    neighbors,
    scale_point,
    simplex_volume,
    single_point_grid,
)
from .market import (
    EnvironmentSnapshot,
    MarginSpec,
    MarketSeries,
    PriceSeries,
    constant_market,
    cover_market,
    ingest_csv,
    lognormal_market,
    normalize_environment,
    normalize_indicators,
    short_return,
    trading_market,
    write_csv,
)
from .sampler import (
    ChainState,
    DampingSpec,
    SamplerBudget,
    TargetDistribution,
    damping_factor,
    ess,
    gamma_t,
    log_concavity_check,
    metropolis_step,
    required_samples,
    run_chains,
    sample_descriptions,
    sampled_universal_run,
    theoretical_budget,
    tv_diagnostic,
    warm_start,
)
from .strategies import (
    CRP,
    AllocationFunction,
    CRPSide,
    FloorSchedule,
    IndicatorAggregation,
    MovingAverage,
    SideInfoModel,
    StrategyMeta,
    SupportResistance,
    derivative_bound_check,
    floor_transform,
    param_point,
)
from .universal import (
    DynamicSchedule,
    HindsightOptimum,
    WealthLedger,
    cumulative_return,
    dynamic_universal_run,
    hindsight_optimum,
    regret,
    universal_describe,
    universal_run,
    write_ledger,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetTooSmall",
    "ConfigError",
    "DataError",
    "DimensionMismatch",
    "GridTooLarge",
    "InsufficientHistory",
    "LengthMismatch",
    "MarginBreach",
    "NonPositivePrice",
    "ParseError",
    "PartitionError",
    "UniversalizeError",
    "GridSpec",
    "ParamSpace",
    "ball_volume",
    "build_grid",
    "mc_simplex_volume",
    "neighbors",
    "scale_point",
    "simplex_volume",
    "single_point_grid",
    "EnvironmentSnapshot",
    "MarginSpec",
    "MarketSeries",
    "PriceSeries",
    "constant_market",
    "cover_market",
    "ingest_csv",
    "lognormal_market",
    "normalize_environment",
    "normalize_indicators",
    "short_return",
    "trading_market",
    "write_csv",
    "ChainState",
    "DampingSpec",
    "SamplerBudget",
    "TargetDistribution",
    "damping_factor",
    "ess",
    "gamma_t",
    "log_concavity_check",
    "metropolis_step",
    "required_samples",
    "run_chains",
    "sample_descriptions",
    "sampled_universal_run",
    "theoretical_budget",
    "tv_diagnostic",
    "warm_start",
    "CRP",
    "AllocationFunction",
    "CRPSide",
    "FloorSchedule",
    "IndicatorAggregation",
    "MovingAverage",
    "SideInfoModel",
    "StrategyMeta",
    "SupportResistance",
    "derivative_bound_check",
    "floor_transform",
    "param_point",
    "DynamicSchedule",
    "HindsightOptimum",
    "WealthLedger",
    "cumulative_return",
    "dynamic_universal_run",
    "hindsight_optimum",
    "regret",
    "universal_describe",
    "universal_run",
    "write_ledger",
]
