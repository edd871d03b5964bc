"""Sample collection by rollouts and distillation into a fresh classifier.

Each iteration samples parameterizations from the probable space, runs the
current policy for a warm-up stretch, then labels a run of consecutive
states with the candidate action of lowest estimated rollout cost.  The
system moves on with the labeled action.  A new network is trained from
scratch on the labeled states and becomes the next policy.

Many parameterizations (chains) are advanced in lockstep and all their
rollouts are stacked into one array of lanes laid out as
``(chain, candidate, rollout)``.  Every chain owns its random stream, so the
dataset does not depend on how many chains share a batch.

Rollouts start from the observable state: the countdown of orders still in
the pipeline is not part of it, so each rollout redraws those countdowns
from their distribution given the orders' ages.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import sim
from .nn import Network, TrainConfig, train_classifier
from .params import SpaceBounds, global_limits, sample_parameterization
from .policies import LaneParams, NeuralLanePolicy, batch_features, feature_length, masked_argmax
from .sim import InstanceTable, Lanes, OrderUpTo


@dataclass
class DclConfig:
    iterations: int = 2
    samples: int = 5_000_000
    workers: int = 1
    per_param: int = 100
    warmup: int = 100
    rollouts: int = 500
    depth: int = 21
    promising: int = 16
    lanes: int = 65536   # lane budget per vectorised rollout batch; no effect on results
    parallel: bool = False

    def __post_init__(self):
        for name in ("iterations", "samples", "workers", "per_param", "rollouts", "depth", "promising"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")

    def params_per_worker(self) -> int:
        return math.ceil(self.samples / self.workers / self.per_param)

    def dataset_size(self) -> int:
        return self.workers * self.params_per_worker() * self.per_param


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    pid: np.ndarray        # parameterization index within the iteration
    candidates: np.ndarray  # (samples, P) promising set, padded by repeating its last entry

    def __len__(self):
        return len(self.y)


def _policy_for(policy, table, inst):
    if policy is None:
        return OrderUpTo(table.imax[inst], table.m[inst])
    return NeuralLanePolicy(policy, fast=True)


def promising_actions(policy, table: InstanceTable, lanes: Lanes, P: int, n_out: int):
    """Ascending candidate sets, shape (lanes, P), padded with their largest action.

    For a network: the P highest logits among feasible actions.  For the
    initial policy (``policy is None``): P consecutive actions centered on
    its own choice and shifted to stay inside [0, m_p].
    """
    m = np.minimum(table.m[lanes.inst], n_out - 1)
    B = lanes.inst.size
    if policy is None:
        a = np.minimum(OrderUpTo(table.imax[lanes.inst], m).act(table, lanes), m)
        lo = np.clip(a - P // 2, 0, np.maximum(0, m - P + 1))
        cand = lo[:, None] + np.arange(P)
        return np.minimum(cand, m[:, None])
    lp = LaneParams.from_table(table, lanes.inst)
    logits = policy.forward(batch_features(table.bounds, lp, lanes))
    cols = np.arange(logits.shape[1])
    logits = np.where(cols <= m[:, None], logits, -np.inf)
    # stable sort on negated logits keeps the smaller action first among equals
    order = np.argsort(-logits, axis=1, kind="stable")[:, :P]
    k = np.minimum(m + 1, P)
    order = np.sort(np.where(np.arange(P) < k[:, None], order, n_out), axis=1)
    last = np.take_along_axis(order, (k - 1)[:, None], axis=1)
    return np.where(np.arange(P) < k[:, None], order, last)


def resample_remaining(table: InstanceTable, inst, qty, u):
    """Draw countdowns for outstanding orders given only their ages.

    ``qty`` is (chains, width); ``u`` is (chains, M, width).  With crossing
    every order's lead time is conditioned on exceeding its age.  Without
    crossing only the oldest outstanding order carries that condition;
    younger ones draw freely and are then pushed behind the one before.
    """
    G, width = qty.shape
    L = table.bounds.L_max
    age = np.arange(1, width + 1)
    cdf = table.lead_cdf[inst]                              # (G, L+1)
    f_age = cdf[:, np.minimum(age, L)][:, None, :]          # (G, 1, width)
    live = (qty > 0)[:, None, :]
    oldest = np.zeros((G, width), bool)
    if width:
        top = width - 1 - np.argmax(qty[:, ::-1] > 0, axis=1)
        oldest[np.arange(G), top] = qty[np.arange(G), top] > 0
    cross = table.crossover[inst]
    cond = np.where(cross[:, None], qty > 0, oldest)[:, None, :]
    uu = np.where(cond, f_age + u * (1.0 - f_age), u)
    lead = (cdf[:, None, None, :] <= uu[..., None]).sum(axis=-1)
    lead = np.minimum(lead, L)
    own = np.where(live, lead - age, -(10**9))
    fifo = np.maximum.accumulate(own[..., ::-1], axis=-1)[..., ::-1]
    rem = np.where(cross[:, None, None], own, fifo)
    return np.where(live, np.maximum(rem, 1), 0)


def rollout_costs(table, chains: Lanes, cand, policy, u_roll, u_post, n_out):
    """Mean H-period cost of each candidate, shape (chains, P).

    ``u_roll`` is (chains, M, H, 2) and is shared by every candidate of a
    chain, as are the redrawn countdowns from ``u_post``.
    """
    G, P = cand.shape
    _, M, H, _ = u_roll.shape
    width = chains.qty.shape[1]
    inst_g = chains.inst
    phase_h = (chains.phase[:, None] + np.arange(H)) % table.K[inst_g][:, None]   # (G, H)
    inst_gmh = np.broadcast_to(inst_g[:, None, None], (G, M, H))
    demand = table.draw_demand(inst_gmh, np.broadcast_to(phase_h[:, None, :], (G, M, H)), u_roll[..., 0])
    lead = table.draw_lead(inst_gmh, u_roll[..., 1])
    rem = resample_remaining(table, inst_g, chains.qty, u_post)        # (G, M, width)

    B = G * P * M
    shape = (G, P, M)
    inst = np.broadcast_to(inst_g[:, None, None], shape).reshape(B)
    lanes = Lanes(inst.copy(),
                  np.broadcast_to(chains.on_hand[:, None, None], shape).reshape(B).copy(),
                  np.broadcast_to(chains.qty[:, None, None, :], shape + (width,)).reshape(B, width).copy(),
                  np.broadcast_to(rem[:, None, :, :], shape + (width,)).reshape(B, width).copy(),
                  np.broadcast_to(chains.phase[:, None, None], shape).reshape(B).copy())
    lane_policy = _policy_for(policy, table, inst)
    m = np.minimum(table.m[inst], n_out - 1)
    total = np.zeros(B)
    for h in range(H):
        if h == 0:
            a = np.broadcast_to(cand[:, :, None], shape).reshape(B)
        else:
            a = np.minimum(lane_policy.act(table, lanes), m)
        d = np.broadcast_to(demand[:, None, :, h], shape).reshape(B)
        ell = np.broadcast_to(lead[:, None, :, h], shape).reshape(B)
        c, _ = sim.advance(table, lanes, a, d, ell)
        total += c
    return total.reshape(G, P, M).mean(axis=2)


def _collect_chunk(policy, cfg: DclConfig, bounds: SpaceBounds, n_out, rngs):
    """Label ``cfg.per_param`` states on each chain given by ``rngs``."""
    G = len(rngs)
    P, M, H, R = cfg.promising, cfg.rollouts, cfg.depth, cfg.per_param
    pars = [sample_parameterization(bounds, r) for r in rngs]
    table = InstanceTable(pars, bounds)
    width = sim.pipe_width(bounds)
    chains = Lanes.empty(np.arange(G), width)
    act = _policy_for(policy, table, chains.inst)

    warm = np.stack([r.random((cfg.warmup, 2)) for r in rngs]) if cfg.warmup else None
    for t in range(cfg.warmup):
        a = np.minimum(act.act(table, chains), np.minimum(table.m, n_out - 1))
        d = table.draw_demand(chains.inst, chains.phase, warm[:, t, 0])
        ell = table.draw_lead(chains.inst, warm[:, t, 1])
        sim.advance(table, chains, a, d, ell)

    F = feature_length(bounds)
    X = np.empty((G, R, F))
    y = np.empty((G, R), np.int64)
    cands = np.empty((G, R, P), np.int64)
    for r in range(R):
        u_roll = np.empty((G, M, H, 2))
        u_post = np.empty((G, M, width))
        u_step = np.empty((G, 2))
        for g, rng in enumerate(rngs):
            u_roll[g] = rng.random((M, H, 2))
            u_post[g] = rng.random((M, width))
            u_step[g] = rng.random(2)
        cand = promising_actions(policy, table, chains, P, n_out)
        est = rollout_costs(table, chains, cand, policy, u_roll, u_post, n_out)
        label = cand[np.arange(G), np.argmin(est, axis=1)]
        X[:, r] = batch_features(bounds, LaneParams.from_table(table, chains.inst), chains)
        y[:, r] = label
        cands[:, r] = cand
        d = table.draw_demand(chains.inst, chains.phase, u_step[:, 0])
        ell = table.draw_lead(chains.inst, u_step[:, 1])
        sim.advance(table, chains, label, d, ell)
    return X, y, cands


def _collect_worker(args):
    policy, cfg, bounds, n_out, seq, offset = args
    n_par = cfg.params_per_worker()
    per_batch = max(1, cfg.lanes // (cfg.promising * cfg.rollouts))
    chain_seqs = seq.spawn(n_par)
    parts = []
    for s in range(0, n_par, per_batch):
        rngs = [np.random.default_rng(q) for q in chain_seqs[s:s + per_batch]]
        parts.append(_collect_chunk(policy, cfg, bounds, n_out, rngs))
    X = np.concatenate([p[0] for p in parts]).reshape(-1, parts[0][0].shape[-1])
    y = np.concatenate([p[1] for p in parts]).reshape(-1)
    cands = np.concatenate([p[2] for p in parts]).reshape(-1, cfg.promising)
    pid = offset + np.repeat(np.arange(n_par), cfg.per_param)
    return X, y, pid, cands


def collect_samples(policy, cfg: DclConfig, bounds: SpaceBounds, seed, n_out=None) -> Dataset:
    """Run the collection loop of one iteration.

    ``policy`` is a :class:`Network` or ``None`` for the initial capped
    base-stock rule.  ``seed`` may be an int or a SeedSequence.
    """
    if n_out is None:
        n_out = policy.n_out if policy is not None else global_limits(bounds)[1] + 1
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seqs = root.spawn(cfg.workers)
    n_par = cfg.params_per_worker()
    jobs = [(policy, cfg, bounds, n_out, q, i * n_par) for i, q in enumerate(seqs)]
    if cfg.parallel and cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_collect_worker, jobs))
    else:
        parts = [_collect_worker(j) for j in jobs]
    return Dataset(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                   np.concatenate([p[2] for p in parts]), np.concatenate([p[3] for p in parts]))


@dataclass
class IterationInfo:
    iteration: int
    samples: int
    train_accuracy: float
    val_accuracy: float
    epochs: int
    best_epoch: int


def superdcl_train(cfg: DclConfig, bounds: SpaceBounds, train_cfg: TrainConfig, seed: int,
                   on_iteration=None, start=None):
    """Run every iteration and return (networks, per-iteration info).

    ``start`` resumes from a list of already trained networks;
    ``on_iteration(i, net, info, data)`` is called after each iteration.
    """
    n_out = global_limits(bounds)[1] + 1
    nets = list(start or [])
    infos = []
    root = np.random.SeedSequence(seed)
    iter_seqs = root.spawn(cfg.iterations)
    for i in range(len(nets), cfg.iterations):
        policy = nets[-1] if nets else None
        data = collect_samples(policy, cfg, bounds, iter_seqs[i], n_out)
        tc = replace(train_cfg, seed=int(iter_seqs[i].generate_state(1)[0]))
        net, rep = train_classifier(data.X, data.y, n_out, tc)
        info = IterationInfo(i, len(data), rep.train_accuracy, rep.val_accuracy,
                             len(rep.val_loss), rep.best_epoch)
        nets.append(net)
        infos.append(info)
        if on_iteration is not None:
            on_iteration(i, net, info, data)
    return nets, infos


# -- single-state helper --------------------------------------------------

def rollout_estimate(par, state, action, policy, M, H, rng, bounds: SpaceBounds, n_out=None):
    """Mean H-period cost of taking ``action`` in ``state`` then following ``policy``."""
    table = InstanceTable([par], bounds)
    if n_out is None:
        n_out = policy.n_out if isinstance(policy, Network) else int(table.m[0]) + 1
    chains = sim.lanes_from_states([state], [0], bounds)
    u_roll = rng.random((1, M, H, 2))
    u_post = rng.random((1, M, chains.qty.shape[1]))
    cand = np.array([[action]])
    return float(rollout_costs(table, chains, cand, policy, u_roll, u_post, n_out)[0, 0])
