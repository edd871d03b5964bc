"""Ordering policies and the feature map fed to the network.

Feature layout, in order:

    crossover flag, p / p_max, on hand / mu_max,
    pipeline by age 1..L_max / mu_max,
    lead-time probabilities 0..L_max,
    K / K_max,
    (mean, std) / mu_max of the next K_max periods starting at the current phase.

All scalings use fixed bounds, never dataset statistics, so a saved network
can be moved between runs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mdp
from .nn import DimensionError, Network
from .params import Parameterization, SpaceBounds
from .sim import InstanceTable, LanePolicy, Lanes, OrderUpTo


def feature_length(bounds: SpaceBounds) -> int:
    return 3 + bounds.L_max + (bounds.L_max + 1) + 1 + 2 * bounds.K_max


def featurize(s: mdp.State, par: Parameterization, bounds: SpaceBounds) -> np.ndarray:
    K = par.K
    scale = bounds.mu_max
    stats = []
    for k in range(bounds.K_max):
        j = (s.phase + k) % K
        stats += [par.demand.means[j] / scale, par.demand.stds[j] / scale]
    return np.array([
        float(par.leadtime.crossover),
        par.p / bounds.p_max,
        s.on_hand / scale,
        *(s.pipeline(bounds.L_max) / scale),
        *par.leadtime.probs,
        K / bounds.K_max,
        *stats,
    ])


def unfeaturize(f, bounds: SpaceBounds) -> dict:
    """Raw quantities recovered from a feature vector (inverse of the scalings)."""
    L, Kb, mu = bounds.L_max, bounds.K_max, bounds.mu_max
    f = np.asarray(f, dtype=float)
    stats = f[3 + L + L + 1 + 1:].reshape(Kb, 2) * mu
    return {
        "crossover": bool(f[0]),
        "p": f[1] * bounds.p_max,
        "on_hand": f[2] * mu,
        "pipeline": f[3:3 + L] * mu,
        "lead_probs": f[3 + L:3 + L + L + 1],
        "K": f[3 + 2 * L + 1] * Kb,
        "means": stats[:, 0],
        "stds": stats[:, 1],
    }


@dataclass(frozen=True, eq=False)
class PolicyHandle:
    kind: str
    levels: tuple = ()
    cap: int | None = None
    net: Network | None = None

    def describe(self) -> str:
        if self.kind == "base_stock":
            return "bsp S=" + "/".join(map(str, self.levels))
        if self.kind == "capped":
            return "cbsp S=" + "/".join(map(str, self.levels)) + f" r={self.cap}"
        return self.kind


def base_stock(levels) -> PolicyHandle:
    return PolicyHandle("base_stock", tuple(int(v) for v in np.atleast_1d(levels)))


def capped_base_stock(levels, cap: int) -> PolicyHandle:
    return PolicyHandle("capped", tuple(int(v) for v in np.atleast_1d(levels)), int(cap))


def initial_policy() -> PolicyHandle:
    return PolicyHandle("initial")


def neural(net: Network) -> PolicyHandle:
    return PolicyHandle("neural", net=net)


def base_stock_act(s: mdp.State, S: int, m_p: int) -> int:
    return int(max(0, min(m_p, S - s.position)))


def capped_base_stock_act(s: mdp.State, S: int, r, m_p: int) -> int:
    return int(min(r, base_stock_act(s, S, m_p)))


def initial_policy_act(s: mdp.State, par: Parameterization) -> int:
    return capped_base_stock_act(s, mdp.base_stock_bound(par, s.phase), mdp.action_bound(par),
                                 mdp.action_bound(par))


def masked_argmax(logits, m_p):
    """Argmax over actions 0..m_p; ties go to the smaller action."""
    logits = np.asarray(logits)
    top = np.minimum(np.asarray(m_p), logits.shape[-1] - 1)
    cols = np.arange(logits.shape[-1])
    masked = np.where(cols <= top[..., None], logits, -np.inf)
    return np.argmax(masked, axis=-1)


def neural_act(net: Network, f, m_p: int) -> int:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != net.n_in:
        raise DimensionError(f"network expects {net.n_in} features, got {f.shape[-1]}")
    return int(masked_argmax(net.forward(f), m_p))


def act(handle: PolicyHandle, s: mdp.State, par: Parameterization, bounds: SpaceBounds) -> int:
    m_p = mdp.action_bound(par)
    if handle.kind == "base_stock":
        return base_stock_act(s, handle.levels[s.phase % len(handle.levels)], m_p)
    if handle.kind == "capped":
        return capped_base_stock_act(s, handle.levels[s.phase % len(handle.levels)], handle.cap, m_p)
    if handle.kind == "initial":
        return initial_policy_act(s, par)
    if handle.kind == "neural":
        return neural_act(handle.net, featurize(s, par, bounds), m_p)
    raise ValueError(f"unknown policy kind {handle.kind!r}")


# -- batched versions -----------------------------------------------------

@dataclass
class LaneParams:
    """Per-lane view of the parameterization a policy is told about."""
    crossover: np.ndarray
    p: np.ndarray
    lead_probs: np.ndarray
    K: np.ndarray
    mu: np.ndarray      # (lanes, K_max), phases repeated cyclically
    sigma: np.ndarray
    m: np.ndarray

    @classmethod
    def from_table(cls, table: InstanceTable, inst):
        return cls(table.crossover[inst], table.p[inst], table.lead_probs[inst],
                   table.K[inst], table.mu[inst], table.sigma[inst], table.m[inst])


def batch_features(bounds: SpaceBounds, lp: LaneParams, lanes: Lanes, dtype=np.float64):
    B = lanes.inst.size
    L, Kb, scale = bounds.L_max, bounds.K_max, bounds.mu_max
    out = np.empty((B, feature_length(bounds)), dtype=dtype)
    out[:, 0] = lp.crossover
    out[:, 1] = lp.p / bounds.p_max
    out[:, 2] = lanes.on_hand / scale
    out[:, 3:3 + L] = lanes.qty[:, :L] / scale
    out[:, 3 + L:4 + 2 * L] = lp.lead_probs
    out[:, 4 + 2 * L] = lp.K / Kb
    idx = (lanes.phase[:, None] + np.arange(Kb)) % lp.K[:, None]
    stats = out[:, 5 + 2 * L:].reshape(B, Kb, 2)
    stats[:, :, 0] = np.take_along_axis(lp.mu, idx, axis=1) / scale
    stats[:, :, 1] = np.take_along_axis(lp.sigma, idx, axis=1) / scale
    return out


class NeuralLanePolicy(LanePolicy):
    """Masked argmax of a network on batched features.

    ``params`` overrides what the network is told about each lane (used by
    the deployment loop to feed estimates); by default lanes see the truth.
    ``fast`` switches to the single-precision forward pass.
    """

    def __init__(self, net: Network, fast=False, params: LaneParams | None = None):
        self.net = net
        self.fast = fast
        self.params = params
        self._cached = None

    def lane_params(self, table, lanes):
        if self.params is not None:
            return self.params
        if self._cached is None or self._cached[0] is not lanes.inst:
            self._cached = (lanes.inst, LaneParams.from_table(table, lanes.inst))
        return self._cached[1]

    def act(self, table, lanes):
        lp = self.lane_params(table, lanes)
        if self.fast:
            logits = self.net.forward_fast(batch_features(table.bounds, lp, lanes, np.float32))
        else:
            logits = self.net.forward(batch_features(table.bounds, lp, lanes))
        return masked_argmax(logits, lp.m)


def lane_policy(handle: PolicyHandle, table: InstanceTable, inst, fast=False) -> LanePolicy:
    """Bind a policy handle to a set of lanes of ``table``."""
    inst = np.asarray(inst, dtype=np.int64)
    Kb = table.bounds.K_max
    if handle.kind == "initial":
        return OrderUpTo(table.imax[inst], table.m[inst])
    if handle.kind in ("base_stock", "capped"):
        lv = np.asarray(handle.levels, dtype=np.int64)
        levels = np.broadcast_to(lv[np.arange(Kb) % lv.size], (inst.size, Kb))
        caps = table.m[inst]
        if handle.kind == "capped":
            caps = np.minimum(caps, handle.cap)
        return OrderUpTo(levels, caps)
    if handle.kind == "neural":
        return NeuralLanePolicy(handle.net, fast=fast)
    raise ValueError(f"unknown policy kind {handle.kind!r}")
