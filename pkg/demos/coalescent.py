"""
Two views of the augmented multiplicative coalescent
====================================================

Run the jump chain and the Poisson graphical construction from three unit
blocks and tabulate the law of (number of blocks, total surplus).
"""

from collections import Counter

from critmc.coalescent import AugmentedState, amc_run, graphical_construction, no_event_probability
from critmc.seeding import make_rng

z = AugmentedState.units(3)
t, N = 0.5, 20_000
rng = make_rng(11)

for run in (amc_run, graphical_construction):
    law = Counter((len(s), min(s.total_surplus, 3)) for s in (run(z, t, rng) for _ in range(N)))
    rows = ", ".join(f"{k}: {v / N:.3f}" for k, v in sorted(law.items()))
    print(f"{run.__name__:>22}  {rows}")

print(f"P(no event) = {no_event_probability(z, t):.3f}")
