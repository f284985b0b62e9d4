"""Estimating the universal portfolio by a random walk on the grid.

Exact quadrature touches every grid point every day. The sampler instead
walks the grid with Metropolis steps whose stationary law is proportional to
past wealth, and averages the rule over the visited points.
"""

import numpy as np

from universalize import CRP, DampingSpec, ParamSpace, SamplerBudget, build_grid, cover_market
from universalize.cli import compare_modes

market = cover_market(10)
grid = build_grid(ParamSpace(2), 0.01)
damping = DampingSpec.default(grid.delta, 2)

for n in (1_000, 10_000, 100_000):
    budget = SamplerBudget(n_samples=n, burn_in=10_000, chains=8, thin=1000)
    cmp = compare_modes(CRP(2), grid, market, budget, seed=0, damping=damping)
    err = np.sqrt(np.mean((cmp.sampled - cmp.target) ** 2))
    print(f"N={n:>7}: max deviation from exact {cmp.deviation.max():.4f}   rms sampling error {err:.2e}")

print("\nday  exact(stock 2)  sampled(stock 2)")
for t in range(market.n_days):
    print(f"{t:>3}  {cmp.exact[t, 1]:.5f}        {cmp.sampled[t, 1]:.5f}")
