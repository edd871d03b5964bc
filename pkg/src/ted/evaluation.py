"""Simulation-based evaluation, benchmark tuning and the deployment loop.

Every run ``r`` of an evaluation draws its uniforms from the r-th child of
``SeedSequence(seed)``, one demand and one lead-time uniform per period, so
policies compared under the same seed see exactly the same randomness.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sim
from .estimate import BatchEstimator
from .params import SpaceBounds, global_limits
from .policies import LaneParams, NeuralLanePolicy, PolicyHandle, base_stock, capped_base_stock, lane_policy
from .sim import InstanceTable, OrderUpTo

Z95 = 1.96


@dataclass
class EvalConfig:
    runs: int = 200
    horizon: int = 2000
    warmup: int = 100
    seed: int = 0
    objective: str = "cost"
    lanes: int = 100_000   # lanes per simulation batch; no effect on results

    def __post_init__(self):
        if self.runs < 1 or self.horizon < 1 or self.warmup < 0:
            raise ValueError("need runs >= 1, horizon >= 1, warmup >= 0")
        if self.objective not in ("cost", "profit"):
            raise ValueError("objective must be 'cost' or 'profit'")


@dataclass
class GapReport:
    names: list
    means: list
    ci: list
    gaps: list
    periods: int
    runs: int
    precise: list = field(default_factory=list)  # CI half-width below 1% of the mean


def summarize(per_run):
    per_run = np.asarray(per_run, dtype=float)
    mean = float(per_run.mean())
    if per_run.size < 2:
        return mean, float("nan")
    return mean, float(Z95 * per_run.std(ddof=1) / np.sqrt(per_run.size))


def relative_cost_gap(c_a, c_b):
    if not c_b > 0:
        raise ValueError("baseline cost must be positive")
    return (c_a - c_b) / c_b


def relative_profit_gap(g_policy, g_bench):
    if not g_bench > 0:
        raise ValueError("baseline profit must be positive")
    return (g_bench - g_policy) / g_bench


def _run_lanes(table, inst, make_policy, cfg: EvalConfig, U, runs):
    """Per-lane mean cost and profit, simulated in chunks of lanes; lane b reads stream runs[b]."""
    B = len(inst)
    cost = np.empty(B)
    profit = np.empty(B)
    for s in range(0, B, cfg.lanes):
        sl = slice(s, min(s + cfg.lanes, B))
        c, g = sim.simulate(table, inst[sl], make_policy(sl), U, cfg.warmup, runs=runs[sl])
        cost[sl] = c
        profit[sl] = g
    return cost, profit


def per_run_values(handle: PolicyHandle, table: InstanceTable, cfg: EvalConfig, which=None):
    """(instances, runs) per-run mean objective of one policy on every instance."""
    which = np.arange(table.n) if which is None else np.asarray(which)
    U = sim.run_uniforms(cfg.seed, cfg.runs, cfg.horizon)
    inst = np.repeat(which, cfg.runs)
    runs = np.tile(np.arange(cfg.runs), len(which))
    cost, profit = _run_lanes(table, inst, lambda sl: lane_policy(handle, table, inst[sl]), cfg, U, runs)
    vals = cost if cfg.objective == "cost" else profit
    return vals.reshape(len(which), cfg.runs)


def evaluate_policy(handle: PolicyHandle, instance, cfg: EvalConfig, bounds: SpaceBounds):
    """Mean per-period objective after warm-up and its 95% CI half-width."""
    table = InstanceTable([instance], bounds)
    return summarize(per_run_values(handle, table, cfg)[0])


def evaluate_many(handle: PolicyHandle, table: InstanceTable, cfg: EvalConfig):
    vals = per_run_values(handle, table, cfg)
    return [summarize(v) for v in vals]


# -- benchmark tuning -----------------------------------------------------

def _search(table: InstanceTable, entries, cfg: EvalConfig):
    """Coordinate descent over per-phase levels for many (instance, cap) entries at once.

    ``entries`` is a list of dicts with keys inst, cap, hi (per-phase upper
    search limits) and levels (start point).  Candidate levels of one phase
    are evaluated side by side on common streams; a move is taken only on
    strict improvement, so the result is never worse than the start.
    """
    U = sim.run_uniforms(cfg.seed, cfg.runs, cfg.horizon)
    R = cfg.runs
    K = table.K

    def evaluate(levels_list, caps, insts):
        n = len(levels_list)
        inst = np.repeat(np.asarray(insts), R)
        lv = np.repeat(np.asarray(levels_list), R, axis=0)
        cp = np.repeat(np.asarray(caps), R)
        runs = np.tile(np.arange(R), n)
        cost, profit = _run_lanes(table, inst, lambda sl: OrderUpTo(lv[sl], cp[sl]), cfg, U, runs)
        vals = cost if cfg.objective == "cost" else -profit
        return vals.reshape(n, R).mean(axis=1)

    for e in entries:
        e["levels"] = np.array(e["levels"], dtype=np.int64)
    base = evaluate([e["levels"] for e in entries], [e["cap"] for e in entries], [e["inst"] for e in entries])
    for e, v in zip(entries, base):
        e["value"] = v
        e["stale"] = 0
    Kb = table.bounds.K_max
    j = 0
    while any(e["stale"] < K[e["inst"]] for e in entries):
        cand_lv, cand_cap, cand_inst, owner = [], [], [], []
        for idx, e in enumerate(entries):
            if e["stale"] >= K[e["inst"]] or j >= K[e["inst"]]:
                continue
            for s in range(int(e["hi"][j]) + 1):
                lv = e["levels"].copy()
                lv[j] = s
                lv[j + K[e["inst"]]::K[e["inst"]]] = s      # keep the cyclic copy in sync
                cand_lv.append(lv)
                cand_cap.append(e["cap"])
                cand_inst.append(e["inst"])
                owner.append(idx)
        if cand_lv:
            vals = evaluate(cand_lv, cand_cap, cand_inst)
            owner = np.asarray(owner)
            for idx in np.unique(owner):
                e = entries[idx]
                mine = np.flatnonzero(owner == idx)
                k = mine[np.argmin(vals[mine])]
                if vals[k] < e["value"]:
                    e["levels"], e["value"] = cand_lv[k], vals[k]
                    e["stale"] = 1
                else:
                    e["stale"] += 1
        j = (j + 1) % Kb
    return entries


def optimize_benchmarks(table: InstanceTable, kind: str, cfg: EvalConfig):
    """Tuned base-stock (``bsp``) or capped base-stock (``cbsp``) handles per instance.

    BSP levels are searched over [0, I_max] per phase starting at I_max.
    C-BSP runs that search for every cap r in 1..m_p; since a cap can only
    lower orders, its levels may usefully exceed I_max and are searched up
    to I_max + m_p.
    """
    Kb = table.bounds.K_max
    entries = []
    for i in range(table.n):
        start = table.imax[i].copy()
        if kind == "bsp":
            entries.append(dict(inst=i, cap=int(table.m[i]), hi=start.copy(), levels=start, r=None))
        elif kind == "cbsp":
            for r in range(1, int(table.m[i]) + 1):
                entries.append(dict(inst=i, cap=r, hi=start + table.m[i], levels=start.copy(), r=r))
        else:
            raise ValueError(f"unknown benchmark kind {kind!r}")
    entries = _search(table, entries, cfg)
    best = {}
    for e in entries:
        if e["inst"] not in best or e["value"] < best[e["inst"]]["value"]:
            best[e["inst"]] = e
    out = []
    for i in range(table.n):
        e = best[i]
        levels = e["levels"][:table.K[i]]
        sign = 1 if cfg.objective == "cost" else -1
        handle = base_stock(levels) if kind == "bsp" else capped_base_stock(levels, e["r"])
        out.append((handle, sign * float(e["value"])))
    return out


def optimize_benchmark(instance, kind: str, cfg: EvalConfig, bounds: SpaceBounds):
    """Tune one instance; returns (handle, evaluated mean objective)."""
    return optimize_benchmarks(InstanceTable([instance], bounds), kind, cfg)[0]


# -- deployment loop -------------------------------------------------------

@dataclass
class TedResult:
    horizons: list
    cost: dict     # horizon -> (instances, runs) per-period mean cost
    profit: dict


def run_ted(instances, net, bounds: SpaceBounds, cfg: EvalConfig, horizons=(200, 500, 1000, 2000),
            demand_known=False, lead_known=False, trace=None):
    """Estimate-then-decide on every instance for ``cfg.runs`` runs.

    Each period the per-run estimator produces the parameter view the
    network is fed, the action is applied to the true instance and the
    observation is folded back in.  No warm-up is discarded; the mean over
    the first H periods is reported for each H in ``horizons``.
    """
    horizons = sorted(horizons)
    T = horizons[-1]
    table = InstanceTable(instances, bounds)
    R = cfg.runs
    inst = np.repeat(np.arange(table.n), R)
    U = sim.run_uniforms(cfg.seed, R, T)
    runs = np.tile(np.arange(R), table.n)
    est = BatchEstimator(table, inst, bounds, global_limits(bounds)[0], demand_known, lead_known)
    lanes = sim.Lanes.empty(inst, sim.pipe_width(bounds))
    cost_sum = np.zeros(inst.size)
    profit_sum = np.zeros(inst.size)
    out_c, out_g = {}, {}
    for t in range(T):
        lp = LaneParams(est.crossover, table.p[inst], est.lead_probs, table.K[inst], est.mu, est.sigma, est.m)
        a = NeuralLanePolicy(net, params=lp).act(table, lanes)
        if trace is not None:
            trace(t, a, lp)
        u = U[runs, t]
        d = table.draw_demand(inst, lanes.phase, u[:, 0])
        ell = table.draw_lead(inst, u[:, 1])
        res = sim.advance(table, lanes, a, d, ell, record=True)
        est.observe(res)
        cost_sum += res.cost
        profit_sum += res.profit
        if t + 1 in horizons:
            out_c[t + 1] = (cost_sum / (t + 1)).reshape(table.n, R)
            out_g[t + 1] = (profit_sum / (t + 1)).reshape(table.n, R)
    return TedResult(horizons, out_c, out_g)
