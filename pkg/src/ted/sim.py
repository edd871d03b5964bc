"""Vectorised dynamics: many independent lanes advanced in lockstep.

Every lane belongs to one instance of an :class:`InstanceTable` and holds
its own on-hand stock, pipeline and phase.  The pipeline is a pair of
``(lanes, width)`` integer arrays indexed by age minus one: quantities and
periods until arrival (zero for empty slots).  The rules are exactly those
of :func:`ted.mdp.step`; the test-suite runs both side by side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mdp
from .params import Parameterization, SpaceBounds


class InstanceTable:
    """Dense arrays describing a list of parameterizations."""

    def __init__(self, instances, bounds: SpaceBounds):
        instances = list(instances)
        if not instances:
            raise ValueError("empty instance list")
        self.instances = instances
        self.bounds = bounds
        n = len(instances)
        self.n = n
        Kb = bounds.K_max
        L = bounds.L_max
        self.K = np.array([par.K for par in instances], dtype=np.int64)
        if self.K.max() > Kb:
            raise ValueError("instance cycle longer than K_max")
        for par in instances:
            if par.L_max != L:
                raise ValueError("lead-time vector length does not match L_max")
        self.d_top = max(par.demand.d_max for par in instances)
        self.cdf = np.ones((n, Kb, self.d_top + 1))
        self.mu = np.zeros((n, Kb))
        self.sigma = np.zeros((n, Kb))
        self.imax = np.zeros((n, Kb), dtype=np.int64)
        self.lead_cdf = np.ones((n, L + 1))
        self.p = np.array([par.p for par in instances])
        self.h = np.array([par.h for par in instances])
        self.crossover = np.array([par.leadtime.crossover for par in instances])
        self.m = np.array([mdp.action_bound(par) for par in instances], dtype=np.int64)
        for i, par in enumerate(instances):
            K = par.K
            for j in range(Kb):
                q = par.demand.pmfs[j % K]
                c = np.cumsum(q)
                c[-1] = 1.0
                self.cdf[i, j, :c.size] = c
                self.mu[i, j] = par.demand.means[j % K]
                self.sigma[i, j] = par.demand.stds[j % K]
            self.imax[i, :] = mdp.base_stock_levels(par)[np.arange(Kb) % K]
            c = np.cumsum(par.leadtime.probs)
            c[-1] = 1.0
            self.lead_cdf[i] = c
        self.lead_probs = np.array([par.leadtime.probs for par in instances])

    def draw_demand(self, inst, phase, u):
        rows = self.cdf[inst, phase]
        return np.minimum((rows <= u[..., None]).sum(axis=-1), self.d_top)

    def draw_lead(self, inst, u):
        rows = self.lead_cdf[inst]
        return np.minimum((rows <= u[..., None]).sum(axis=-1), self.bounds.L_max)


@dataclass
class Lanes:
    inst: np.ndarray
    on_hand: np.ndarray
    qty: np.ndarray       # (lanes, width) by age - 1
    remaining: np.ndarray  # (lanes, width)
    phase: np.ndarray

    @classmethod
    def empty(cls, inst, width):
        inst = np.asarray(inst, dtype=np.int64)
        B = inst.size
        return cls(inst, np.zeros(B, np.int64), np.zeros((B, width), np.int64),
                   np.zeros((B, width), np.int64), np.zeros(B, np.int64))

    def copy(self):
        return Lanes(self.inst.copy(), self.on_hand.copy(), self.qty.copy(),
                     self.remaining.copy(), self.phase.copy())

    def take(self, idx):
        return Lanes(self.inst[idx], self.on_hand[idx], self.qty[idx],
                     self.remaining[idx], self.phase[idx])

    @property
    def position(self):
        return self.on_hand + self.qty.sum(axis=1)


def pipe_width(bounds: SpaceBounds) -> int:
    return max(bounds.L_max, 1)


def lanes_from_states(states, inst, bounds: SpaceBounds) -> Lanes:
    lanes = Lanes.empty(inst, pipe_width(bounds))
    for b, s in enumerate(states):
        lanes.on_hand[b] = s.on_hand
        lanes.phase[b] = s.phase
        for o in s.orders:
            lanes.qty[b, o.age - 1] += o.qty
            lanes.remaining[b, o.age - 1] = o.remaining
    return lanes


def state_of(lanes: Lanes, b: int) -> mdp.State:
    orders = tuple(mdp.Order(k + 1, int(lanes.qty[b, k]), int(lanes.remaining[b, k]))
                   for k in range(lanes.qty.shape[1] - 1, -1, -1) if lanes.qty[b, k] > 0)
    return mdp.State(int(lanes.on_hand[b]), orders, int(lanes.phase[b]))


@dataclass
class StepResult:
    cost: np.ndarray
    profit: np.ndarray
    sale: np.ndarray
    censored: np.ndarray
    phase: np.ndarray      # phase in which the demand occurred
    arrived: np.ndarray    # (lanes, width) quantities delivered, by realized lead - 1
    immediate: np.ndarray  # bool, order delivered with lead zero


def advance(table: InstanceTable, lanes: Lanes, action, demand, lead, record=False):
    """Apply one period in place.  Returns costs and profits (and observations if asked)."""
    inst = lanes.inst
    a = np.asarray(action, dtype=np.int64)
    cross = table.crossover[inst]
    rem = np.where(cross, lead, np.maximum(lead, lanes.remaining.max(axis=1)))
    now = (rem == 0) & (a > 0)
    immediate = np.where(now, a, 0)
    avail = lanes.on_hand + immediate
    sale = np.minimum(demand, avail)
    left = avail - sale
    p = table.p[inst]
    cost = table.h[inst] * left + p * (demand - sale)
    profit = p * sale - table.h[inst] * left

    q = lanes.qty
    r = lanes.remaining
    late = (rem > 0) & (a > 0)
    q[:, 1:] = q[:, :-1].copy()
    r[:, 1:] = r[:, :-1].copy()
    q[:, 0] = np.where(late, a, 0)
    r[:, 0] = np.where(late, rem, 0)
    np.subtract(r, 1, out=r, where=q > 0)
    due = (r == 0) & (q > 0)
    arrived = np.where(due, q, 0)
    lanes.on_hand = left + arrived.sum(axis=1)
    q[due] = 0
    phase = lanes.phase
    lanes.phase = (phase + 1) % table.K[inst]
    if not record:
        return cost, profit
    return StepResult(cost, profit, sale, demand >= avail, phase, arrived, now)


# -- policies on lanes ----------------------------------------------------

class LanePolicy:
    """Maps a batch of lanes to actions."""

    def act(self, table: InstanceTable, lanes: Lanes) -> np.ndarray:
        raise NotImplementedError


class OrderUpTo(LanePolicy):
    """Per-lane order-up-to levels by phase with a per-lane cap."""

    def __init__(self, levels, caps):
        self.levels = np.asarray(levels, dtype=np.int64)
        self.caps = np.asarray(caps, dtype=np.int64)

    def act(self, table, lanes):
        B = lanes.inst.size
        S = self.levels[np.arange(B), lanes.phase]
        return np.clip(S - lanes.position, 0, self.caps)


def initial_lane_policy(table, inst):
    return OrderUpTo(table.imax[inst], table.m[inst])


def simulate(table: InstanceTable, inst, policy: LanePolicy, uniforms, warmup=0, observer=None, runs=None):
    """Run lanes from the empty state through ``uniforms`` of shape (lanes, T, 2).

    With ``runs`` given, ``uniforms`` holds one stream per run instead and
    lane b reads stream ``runs[b]``, so lanes sharing a run share randomness
    without copies.  Returns per-lane mean cost and mean profit over the
    periods after the warm-up; an observer sees every period's result.
    """
    inst = np.asarray(inst, dtype=np.int64)
    B, T = inst.size, uniforms.shape[1]
    pick = slice(None) if runs is None else np.asarray(runs, dtype=np.int64)
    lanes = Lanes.empty(inst, pipe_width(table.bounds))
    cost_sum = np.zeros(B)
    profit_sum = np.zeros(B)
    for t in range(T):
        a = policy.act(table, lanes)
        u = uniforms[pick, t]
        d = table.draw_demand(inst, lanes.phase, u[:, 0])
        ell = table.draw_lead(inst, u[:, 1])
        if observer is None:
            c, g = advance(table, lanes, a, d, ell)
        else:
            res = advance(table, lanes, a, d, ell, record=True)
            observer(t, a, res, lanes)
            c, g = res.cost, res.profit
        if t >= warmup:
            cost_sum += c
            profit_sum += g
    n = max(T - warmup, 1)
    return cost_sum / n, profit_sum / n


def run_uniforms(seed: int, runs: int, T: int) -> np.ndarray:
    """Per-run streams spawned from one seed; shape (runs, T, 2)."""
    children = np.random.SeedSequence(seed).spawn(runs)
    return np.stack([np.random.default_rng(c).random((T, 2)) for c in children])
