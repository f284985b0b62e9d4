"""How fast the universal strategy catches the best parameters in hindsight.

The per-day log-wealth gap to the best grid point shrinks roughly like
log(n)/n on a random market.
"""

import math

from universalize import CRP, ParamSpace, build_grid, lognormal_market, regret, universal_run

market = lognormal_market(500, 2, mu=0.0, sigma=0.05, seed=11)
ledger = universal_run(CRP(2), build_grid(ParamSpace(2), 0.01), market)
gap = regret(ledger, ledger.benchmark_log_wealth)

print("   n   gap(n)     gap(n) n / log n")
for n in (10, 50, 100, 200, 500):
    print(f"{n:>4}   {gap[n - 1]:.2e}   {gap[n - 1] * n / math.log(n):.3f}")
