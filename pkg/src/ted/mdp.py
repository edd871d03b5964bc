"""Scalar reference dynamics for one lost-sales instance.

States are taken at the decision epoch, after this period's arrivals have
been added to on-hand stock.  Each outstanding order carries its age, its
quantity and the number of periods until it arrives.  With crossing lead
times that countdown is the drawn lead time itself; without crossing it is
pushed back so no order overtakes an older one.

This module favours clarity over speed.  ``ted.sim`` runs the same rules on
arrays of lanes and is tested against it.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .params import Parameterization


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class Order:
    age: int
    qty: int
    remaining: int


@dataclass(frozen=True)
class State:
    on_hand: int = 0
    orders: tuple = ()
    phase: int = 0

    @property
    def position(self) -> int:
        """Inventory position: on hand plus everything still in the pipeline."""
        return self.on_hand + sum(o.qty for o in self.orders)

    def pipeline(self, L_max: int) -> np.ndarray:
        out = np.zeros(L_max, dtype=np.int64)
        for o in self.orders:
            out[o.age - 1] += o.qty
        return out


@dataclass(frozen=True)
class Observation:
    sale: int
    censored: bool
    phase: int
    arrivals: tuple = ()  # realized lead times of orders delivered this period


@dataclass(frozen=True)
class PeriodOutcome:
    next_state: State
    cost: float
    profit: float
    observation: Observation
    demand: int = field(default=0, compare=False)


def initial_state(par: Parameterization | None = None) -> State:
    return State(0, (), 0)


def period_cost(available, demand, h, p):
    return h * max(available - demand, 0) + p * max(demand - available, 0)


def period_profit(available, demand, h, p):
    return p * min(demand, available) - h * max(available - demand, 0)


def _fractile_index(cdf, frac):
    return int(np.searchsorted(cdf, frac - 1e-12))


_bounds_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def action_bound(par: Parameterization) -> int:
    """Newsvendor fractile of single-period demand, maximised over phases."""
    hit = _bounds_cache.get(par)
    if hit is None:
        hit = _bounds_cache[par] = {}
    if "m" not in hit:
        frac = par.p / (par.p + par.h)
        hit["m"] = max(_fractile_index(np.cumsum(q), frac) for q in par.demand.pmfs)
    return hit["m"]


def review_span(par: Parameterization) -> int:
    """Periods of demand an order-up-to level has to cover."""
    return math.ceil(par.leadtime.mean - 1e-9) + 1


def base_stock_levels(par: Parameterization) -> np.ndarray:
    """Fractile of demand over the review span, one level per starting phase."""
    hit = _bounds_cache.get(par)
    if hit is None:
        hit = _bounds_cache[par] = {}
    if "imax" not in hit:
        frac = par.p / (par.p + par.h)
        span, K = review_span(par), par.K
        levels = []
        for j in range(K):
            total = np.ones(1)
            for t in range(span):
                total = np.convolve(total, par.demand.pmfs[(j + t) % K])
            levels.append(_fractile_index(np.cumsum(total), frac))
        hit["imax"] = np.array(levels, dtype=np.int64)
    return hit["imax"]


def base_stock_bound(par: Parameterization, phase: int = 0) -> int:
    return int(base_stock_levels(par)[phase])


def draw_from_cdf(cdf, u: float) -> int:
    """Inverse-CDF draw; outcomes with zero mass are never returned."""
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def step(s: State, a: int, par: Parameterization, u_demand: float, u_lead: float,
         demand: int | None = None, lead: int | None = None) -> PeriodOutcome:
    """Advance one period given the two uniforms that drive it.

    ``demand`` and ``lead`` override the inverse-CDF draws, which is handy
    when a test wants to force a particular realization.
    """
    a = int(a)
    if a < 0 or a > action_bound(par):
        raise ContractViolation(f"action {a} outside [0, {action_bound(par)}]")
    if lead is None:
        lead = draw_from_cdf(np.cumsum(par.leadtime.probs), u_lead)
    if demand is None:
        demand = draw_from_cdf(np.cumsum(par.demand.pmfs[s.phase]), u_demand)

    remaining = lead
    if not par.leadtime.crossover:
        remaining = max([lead] + [o.remaining for o in s.orders])
    immediate = a if (remaining == 0 and a > 0) else 0

    available = s.on_hand + immediate
    sale = min(demand, available)
    left = available - sale
    cost = period_cost(available, demand, par.h, par.p)
    profit = period_profit(available, demand, par.h, par.p)

    moved = [Order(o.age + 1, o.qty, o.remaining - 1) for o in s.orders]
    if a > 0 and remaining > 0:
        moved.append(Order(1, a, remaining - 1))
    arrived = [o for o in moved if o.remaining == 0]
    still = tuple(sorted((o for o in moved if o.remaining > 0), key=lambda o: -o.age))
    arrivals = tuple(o.age for o in arrived)
    if immediate:
        arrivals = (0,) + arrivals

    nxt = State(left + sum(o.qty for o in arrived), still, (s.phase + 1) % par.K)
    obs = Observation(sale, demand >= available, s.phase, arrivals)
    return PeriodOutcome(nxt, cost, profit, obs, demand)


def transition(s: State, a: int, par: Parameterization, rng: np.random.Generator) -> PeriodOutcome:
    u = rng.random(2)
    return step(s, a, par, u[0], u[1])


def trajectory_rows(states, actions, outcomes, L_max: int):
    """CSV-ready rows: t, phase, on hand, pipeline by age, action, sale, censored, cost, profit."""
    rows = []
    for t, (s, a, out) in enumerate(zip(states, actions, outcomes)):
        rows.append([t, s.phase, s.on_hand, *s.pipeline(L_max).tolist(), a,
                     out.observation.sale, int(out.observation.censored), out.cost, out.profit])
    return rows
