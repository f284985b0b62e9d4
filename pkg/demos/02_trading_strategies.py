"""Universalizing technical trading rules.

A moving-average rule has two weight vectors (fast and slow averages) as its
parameters; a support/resistance rule has one. Instead of picking the
parameters, the universal version averages the rule over all of them.
"""

import numpy as np

from universalize import (
    MovingAverage,
    ParamSpace,
    SupportResistance,
    build_grid,
    derivative_bound_check,
    hindsight_optimum,
    universal_run,
)

rng = np.random.default_rng(7)
# a drifting random walk with a regime change halfway
steps = np.r_[rng.normal(0.004, 0.015, 60), rng.normal(-0.004, 0.015, 60)]
prices = np.cumprod(np.r_[1.0, np.exp(steps)])

for strat in (MovingAverage(prices, 4, "line"), SupportResistance(prices, 4, "plane")):
    meta = strat.meta
    grid = build_grid(ParamSpace(meta.k, meta.ell), 0.25 if meta.ell > 1 else 0.05)
    ledger = universal_run(strat, grid, strat.market)
    best = hindsight_optimum(strat, grid, strat.market)
    print(f"{strat.name}: grid of {len(grid)} parameter points, {strat.market.n_days} trading days")
    print(f"  universal wealth {ledger.final_wealth:.4f}   best fixed parameters {best.value:.4f}")
    print(f"  best point {np.round(best.point, 2).tolist()}")
    rep = derivative_bound_check(strat, trials=100)
    print(f"  derivative bound {meta.derivative_bound}: observed {rep.observed:.3f}, ok={rep.ok}")

# step allocation functions jump, so they fall outside the guarantees
step = MovingAverage(prices, 4, "step")
print("\nstep MA universalizable:", step.meta.universalizable)
