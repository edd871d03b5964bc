"""Watch the product-limit estimate recover a demand law from censored sales.

An order-up-to policy hides every demand above the stock on offer.  The
script draws Poisson(6) demand, sells at most a fixed stock, and compares
the fitted mean under both rules for the mass left after the last
uncensored sale.
"""
import numpy as np

from ted.estimate import DemandObs, km_cdf, moments_from_cdf

rng = np.random.default_rng(7)
true_mean, D_max = 6.0, 40

for stock in (5, 7, 9, 12):
    demand = rng.poisson(true_mean, size=2000)
    obs = [DemandObs(int(min(d, stock)), bool(d >= stock)) for d in demand]
    share = np.mean([o.censored for o in obs])
    line = [f"stock {stock:2d}  censored {share:5.1%}"]
    for rule in ("largest", "top"):
        mu, sd = moments_from_cdf(km_cdf(obs, D_max, tail=rule))
        line.append(f"{rule:>7}: mean {mu:6.2f}  sd {sd:5.2f}")
    print("   ".join(line))

print(f"\ntrue mean {true_mean}, true sd {np.sqrt(true_mean):.2f}")
print("Sending the leftover mass to D_max inflates the mean whenever censoring is heavy;\n"
      "keeping it at the largest observed value errs low, and by far less.")
