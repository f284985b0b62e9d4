"""Why rebalancing helps: the alternating cover market.

Stock 1 is cash. Stock 2 doubles and halves on alternate days, so holding
either one alone goes nowhere. Rebalancing to half-and-half every day gains
a factor 9/8 every two days.
"""

import numpy as np

from universalize import CRP, ParamSpace, build_grid, cover_market, cumulative_return, universal_run

market = cover_market(20)
print("daily returns of the two stocks (first 4 days):")
print(market.returns[:4])

# buy-and-hold either stock ends where it started
print("\nhold stock 2 only :", np.prod(market.returns[:, 1]))

for w in ([1.0, 0.0], [0.25, 0.75], [0.5, 0.5]):
    ledger = cumulative_return(CRP(2), w, market)
    print(f"CRP{tuple(w)} final wealth {ledger.final_wealth:.6f}")
print("(9/8)^10 =", (9 / 8) ** 10)

# the universal portfolio averages every CRP weighted by its past wealth
grid = build_grid(ParamSpace(2), 1e-3)
two = universal_run(CRP(2), grid, cover_market(2))
print("\nuniversal wealth after 2 days:", two.final_wealth, " vs 13/12 =", 13 / 12)
print("day-1 weight on stock 2     :", two.descriptions[1, 1], " vs 5/9 =", 5 / 9)

full = universal_run(CRP(2), grid, market)
print("universal wealth after 20 days:", round(full.final_wealth, 4),
      " best CRP in hindsight:", round(float(np.exp(full.benchmark_log_wealth[-1])), 4))
