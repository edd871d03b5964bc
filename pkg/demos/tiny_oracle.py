"""Exact dynamic programming on a tiny lost-sales instance.

Solves the average-cost problem by relative value iteration, compares the
optimal gain with the best order-up-to rule, simulates the optimal policy,
and checks the cost-gap bound for a slightly wrong parameter estimate.
"""
import numpy as np

from ted import audit, mdp, oracle
from ted.evaluation import EvalConfig, summarize
from ted.params import make_parameterization
from ted.sim import InstanceTable, run_uniforms, simulate

truth = make_parameterization(9.0, [1.6, 0.9], [1.1, 0.8], [0.3, 0.7], crossover=False)
trunc = oracle.enumerate_transitions(truth)
gain, policy, _ = oracle.dp_average_cost(trunc)
levels, bs_gain = oracle.best_base_stock(trunc)
print(f"{trunc.domain.n_states} states, optimal gain {gain:.4f}")
print(f"best order-up-to levels {tuple(levels)} with gain {bs_gain:.4f} "
      f"({(bs_gain - gain) / gain:+.2%} above optimal)")

cfg = EvalConfig(runs=100, horizon=2000, warmup=100, seed=1)
U = run_uniforms(cfg.seed, cfg.runs, cfg.horizon)
cost, _ = simulate(InstanceTable([truth], audit.TINY_BOUNDS), np.zeros(cfg.runs, np.int64),
                   oracle.TablePolicy(policy), U, cfg.warmup)
mean, ci = summarize(cost)
print(f"simulated optimal policy: {mean:.4f} +/- {ci:.4f}")

estimate = make_parameterization(11.0, [1.8, 0.9], [1.2, 0.8], [0.3, 0.7], crossover=False)
dom = oracle.shared_domain(truth, estimate)
table = oracle.base_stock_table(oracle.TruncatedInstance(truth, dom), mdp.base_stock_levels(truth))
lhs, rhs, holds = oracle.bound_check(table, truth, [estimate] * 20, domain=dom)
print(f"distance {oracle.param_distance(truth, estimate, dom):.3f}; "
      f"20-period cost gap {lhs:.4f} <= bound {rhs:.4f}: {holds}")
