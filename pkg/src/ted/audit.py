"""Random tiny instances and the oracle audits run by ``ted oracle``.

Tiny instances keep the exact state space small: one or two phases, lead
times of at most one period and demand supports of at most nine values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mdp, oracle
from .evaluation import EvalConfig, summarize
from .params import SpaceBounds, make_parameterization, sigma_min
from .sim import InstanceTable, run_uniforms, simulate

TINY_BOUNDS = SpaceBounds(p_min=2.0, p_max=19.0, mu_min=0.5, mu_max=2.5, K_max=2, L_max=1)
TINY_D_MAX = 8


def tiny_instance(rng: np.random.Generator, K=None, p=None):
    """Random instance with lead <= 1 and demand support <= TINY_D_MAX."""
    K = K or int(rng.integers(1, 3))
    p = float(rng.uniform(2.0, 19.0)) if p is None else p
    kind = int(rng.integers(3))
    crossover = False
    if kind == 0:
        lead = [1.0, 0.0]
    elif kind == 1:
        lead = [0.0, 1.0]
    else:
        w = float(rng.uniform(0.2, 0.8))
        lead = [w, 1 - w]
        crossover = bool(rng.random() < 0.5)
    while True:
        means = rng.uniform(0.5, 2.5, size=K)
        stds = [float(rng.uniform(sigma_min(m), 1.2 * m)) for m in means]
        par = make_parameterization(p, means, stds, lead, crossover)
        if par.demand.d_max <= TINY_D_MAX:
            return par


def perturbed(par, rng: np.random.Generator):
    """A nearby estimate: same phases and lead support, jittered moments and penalty."""
    means, stds = [], []
    for m in par.demand.means:
        m2 = float(np.clip(m * rng.uniform(0.7, 1.3), 0.5, 2.5))
        means.append(m2)
        stds.append(float(rng.uniform(sigma_min(m2), 1.2 * m2)))
    p2 = float(np.clip(par.p * rng.uniform(0.8, 1.2), 2.0, 19.0))
    return make_parameterization(p2, means, stds, par.leadtime.probs, par.leadtime.crossover)


@dataclass
class BridgeRow:
    gain: float
    sim_mean: float
    ci: float

    @property
    def ok(self):
        return abs(self.sim_mean - self.gain) <= 3 * self.ci


def dp_bridge(par, cfg: EvalConfig):
    """Exact optimal gain versus the simulated mean of the greedy DP policy."""
    trunc = oracle.enumerate_transitions(par)
    g, pol, _ = oracle.dp_average_cost(trunc)
    table = InstanceTable([par], TINY_BOUNDS)
    U = run_uniforms(cfg.seed, cfg.runs, cfg.horizon)
    cost, _ = simulate(table, np.zeros(cfg.runs, np.int64), oracle.TablePolicy(pol), U, cfg.warmup)
    mean, ci = summarize(cost)
    return BridgeRow(g, mean, ci)


@dataclass
class BoundRow:
    lhs: float
    rhs: float
    holds: bool


def bound_trial(rng: np.random.Generator, T: int, flip=False):
    """One random (truth, estimate sequence) pair checked against the bound.

    The estimate sequence mixes a few perturbed instances with the truth,
    the policy is the truth's order-up-to-I_max table.
    """
    truth = tiny_instance(rng)
    pool = [perturbed(truth, rng) for _ in range(3)] + [truth]
    seq = [pool[int(k)] for k in rng.integers(len(pool), size=T)]
    dom = oracle.natural_domain(truth)
    for ph in pool:
        d2 = oracle.shared_domain(truth, ph)
        dom = oracle.Domain(dom.K, max(dom.cap, d2.cap), 0, max(dom.n_actions, d2.n_actions))
    trunc = oracle.TruncatedInstance(truth, dom)
    policy = oracle.base_stock_table(trunc, mdp.base_stock_levels(truth))
    dist = oracle.param_distance
    if flip:
        dist = lambda a, b, d: -oracle.param_distance(a, b, d)
    lhs, rhs, holds = oracle.bound_check(policy, truth, seq, s0=0, T=T, domain=dom, distance=dist)
    return BoundRow(lhs, rhs, holds)
