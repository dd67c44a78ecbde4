"""
Largest component in the critical window
========================================

Sample Erdos-Renyi graphs at t_c + lambda n^(-1/3) and compare the rescaled
largest component with excursions of reflected Brownian motion with
parabolic drift.
"""

from critmc.experiments import WindowConfig, compare, run_limit_reference, run_window
from critmc.fluid import critical_constants
from critmc.rules import builtin_rule

er = builtin_rule("erdos-renyi")
consts = critical_constants(er)
lambdas = [-1.0, 0.0, 1.0]

graphs = run_window(WindowConfig(er, 20_000, lambdas, replicates=200, constants=consts, seed=3))
limit = run_limit_reference(lambdas, replicates=1000, seed=3)

for s in compare(graphs, limit).per_lambda:
    print(f"lambda = {s.lam:+.1f}  mean C1: graph {s.mean_size_emp:.3f} limit {s.mean_size_ref:.3f}"
          f"  KS p = {s.ks_pvalue:.2f}  mean surplus: {s.mean_surplus_emp:.2f} vs"
          f" {s.mean_surplus_ref:.2f}")
