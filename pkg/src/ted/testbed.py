"""The three benchmark testbeds: iid demand, cyclic demand, stochastic lead times.

Every instance uses the full lead-time window 0..10 so the records of one
case line up.  Dispersion labels map a mean to a standard deviation:

    binomial   var = mu / 2           (underdispersed)
    poisson    var = mu
    negbin     var = mu + mu^2 / 2    (shape 2)
    geometric  var = mu + mu^2        (shape 1)
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .params import (LeadTimeSpec, Parameterization, SpaceBounds, deterministic_lead, from_record,
                     make_parameterization, to_record)

TESTBED_BOUNDS = SpaceBounds()
LEAD_WINDOW = 10


def dispersion_std(mu: float, kind: str) -> float:
    var = {"binomial": mu / 2, "poisson": mu, "negbin": mu + mu * mu / 2,
           "geometric": mu + mu * mu}[kind]
    return math.sqrt(var)


CASE1_MEANS = (3.0, 5.0, 7.0, 10.0)
CASE1_PENALTIES = (9.0, 39.0, 69.0, 99.0)
CASE1_LEADS = (2, 4, 6, 8, 10)
CASE1_KINDS = ("binomial", "poisson", "negbin", "geometric")

CASE2_MEANS = {
    3: [(2.5, 4.5, 3.0), (9.0, 11.0, 9.5), (3.0, 6.0, 10.0)],
    5: [(4.0, 2.5, 3.0, 4.5, 3.0), (7.5, 11.5, 10.0, 9.5, 8.5), (11.0, 3.0, 5.0, 8.0, 6.0)],
    7: [(3.0, 4.0, 2.0, 3.5, 4.5, 2.5, 4.0), (11.0, 10.0, 9.0, 10.0, 11.0, 8.5, 9.5),
        (3.0, 5.0, 5.0, 7.0, 7.0, 10.0, 10.0)],
}
STD_PATTERNS = {
    "low": ("poisson", "binomial", "poisson", "binomial", "poisson", "binomial", "poisson"),
    "high": ("geometric", "negbin", "geometric", "negbin", "geometric", "negbin", "geometric"),
    "mix": ("poisson", "geometric", "negbin", "binomial", "poisson", "geometric", "negbin"),
}
CASE2_PENALTIES = (9.0, 39.0, 69.0)
CASE2_LEADS = (3, 6, 9)

CASE3_MEANS = {1: (5.0,), 3: (8.0, 10.0, 6.0), 5: (11.0, 3.0, 5.0, 8.0, 6.0),
               7: (3.0, 5.0, 5.0, 7.0, 7.0, 10.0, 10.0)}
CASE3_PENALTIES = (9.0, 39.0, 69.0)

# probabilities of lead times 0..10; first block ordered, second block crossing
SEQUENTIAL_LEADS = (
    (0.0, 0.1, 0.18, 0.216, 0.2016, 0.1512, 0.09072, 0.042336, 0.0145152, 0.00326592, 0.00036288),
    (0.0, 0.0, 0.2, 0.32, 0.288, 0.1536, 0.0384, 0.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.1, 0.27, 0.378, 0.2268, 0.0252, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.27, 0.378, 0.252),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.32, 0.288, 0.1536, 0.0384),
    (0.0, 0.0, 0.0, 0.0, 0.05, 0.095, 0.171, 0.2052, 0.21546, 0.184338, 0.079002),
    (0.0, 0.0, 0.0, 0.0, 0.1, 0.225, 0.3375, 0.253125, 0.0759375, 0.0084375, 0.0),
    (0.05, 0.095, 0.171, 0.2052, 0.21546, 0.184338, 0.079002, 0.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.03125),
    (0.0, 0.0, 0.0, 0.3, 0.49, 0.189, 0.021, 0.0, 0.0, 0.0, 0.0),
)
CROSSING_LEADS = (
    (0.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
    (0.0, 0.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.3, 0.1, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.2, 0.2, 0.2),
    (0.0, 0.0, 0.0, 0.0, 0.05, 0.05, 0.1, 0.1, 0.15, 0.25, 0.3),
    (0.05, 0.05, 0.1, 0.1, 0.15, 0.25, 0.3, 0.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.1, 0.15, 0.25, 0.25, 0.15, 0.1, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5),
    (0.0, 0.0, 0.0, 0.3, 0.4, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0),
)


def _stds(means, pattern):
    return [dispersion_std(m, STD_PATTERNS[pattern][j]) for j, m in enumerate(means)]


def _normalized(probs):
    # the listed vectors are decimal; a few sum to 1 only up to float rounding
    v = np.array(probs, dtype=float)
    return v / v.sum()


def _case1():
    out = []
    for mu, p, lead, kind in itertools.product(CASE1_MEANS, CASE1_PENALTIES, CASE1_LEADS, CASE1_KINDS):
        lt = deterministic_lead(lead, LEAD_WINDOW)
        out.append(make_parameterization(p, [mu], [dispersion_std(mu, kind)], lt.probs, False))
    return out


def _case2():
    out = []
    for K in (3, 5, 7):
        for means, pattern, p, lead in itertools.product(CASE2_MEANS[K], STD_PATTERNS, CASE2_PENALTIES,
                                                         CASE2_LEADS):
            lt = deterministic_lead(lead, LEAD_WINDOW)
            out.append(make_parameterization(p, means, _stds(means, pattern), lt.probs, False))
    return out


def _case3():
    out = []
    for K, p in itertools.product((1, 3, 5, 7), CASE3_PENALTIES):
        means = CASE3_MEANS[K]
        for crossing, vectors in ((False, SEQUENTIAL_LEADS), (True, CROSSING_LEADS)):
            for probs in vectors:
                out.append(make_parameterization(p, means, _stds(means, "mix"), _normalized(probs), crossing))
    return out


def build_testbed(case: int) -> list[Parameterization]:
    """Full-factorial instance list of case 1, 2 or 3."""
    builders = {1: _case1, 2: _case2, 3: _case3}
    if case not in builders:
        raise ValueError(f"unknown testbed case {case}")
    return builders[case]()


def save_testbed(instances, path):
    with open(path, "w") as fh:
        for par in instances:
            fh.write(to_record(par) + "\n")


def load_testbed(path, eps: float = 1e-4):
    with open(path) as fh:
        return [from_record(line, eps) for line in fh if line.strip()]


def with_lead_window(par: Parameterization, L_max: int) -> Parameterization:
    """Same instance with its lead-time vector padded or trimmed to 0..L_max."""
    probs = par.leadtime.probs
    if probs.size - 1 == L_max:
        return par
    if np.any(probs[L_max + 1:] > 0):
        raise ValueError(f"instance has lead times beyond {L_max}")
    out = np.zeros(L_max + 1)
    out[:min(probs.size, L_max + 1)] = probs[:L_max + 1]
    return Parameterization(par.p, par.demand, LeadTimeSpec(par.leadtime.crossover, out), par.h)
