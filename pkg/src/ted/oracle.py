"""Exact machinery for small instances.

Lead times of at most two periods keep the observable state tiny: on-hand
stock (capped), the quantity of the one order that can still be in transit
(it always lands next period), and the phase.  On that state space we get
exact expected costs, transition rows, average-cost dynamic programming by
relative value iteration, exact policy gains, the parameterization distance
and an exact check of the finite-horizon estimation-error bound.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import mdp
from .params import Parameterization
from .sim import LanePolicy

log = logging.getLogger(__name__)


class StateSpaceOverflow(ValueError):
    pass


class DomainMismatch(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


def lead_reach(par: Parameterization) -> int:
    nz = np.flatnonzero(par.leadtime.probs)
    return int(nz[-1])


@dataclass(frozen=True)
class Domain:
    """Shared truncated state/action space.

    States are (phase, in-transit quantity, on hand) with on hand in
    0..cap and in-transit in 0..x_max; actions are 0..n_actions-1.
    """
    K: int
    cap: int
    x_max: int
    n_actions: int

    @property
    def shape(self):
        return (self.K, self.x_max + 1, self.cap + 1)

    @property
    def n_states(self):
        return self.K * (self.x_max + 1) * (self.cap + 1)


def natural_domain(par: Parameterization) -> Domain:
    if lead_reach(par) > 2:
        raise DomainMismatch("exact oracle supports lead times of at most two periods")
    m = mdp.action_bound(par)
    cap = int(mdp.base_stock_levels(par).max()) + par.demand.d_max
    return Domain(par.K, cap, m if lead_reach(par) == 2 else 0, m + 1)


def shared_domain(p1: Parameterization, p2: Parameterization) -> Domain:
    if p1.K != p2.K:
        raise DomainMismatch(f"cycle lengths differ ({p1.K} vs {p2.K})")
    a, b = natural_domain(p1), natural_domain(p2)
    n_act = max(a.n_actions, b.n_actions)
    x_max = n_act - 1 if max(a.x_max, b.x_max) > 0 else 0
    return Domain(a.K, max(a.cap, b.cap), x_max, n_act)


class TruncatedInstance:
    """One parameterization expanded on a truncated domain."""

    def __init__(self, par: Parameterization, domain: Domain | None = None, limit=10**6):
        dom = domain or natural_domain(par)
        if par.K != dom.K:
            raise DomainMismatch(f"instance has {par.K} phases, domain {dom.K}")
        reach = lead_reach(par)
        if reach > 2 or (reach == 2 and dom.x_max < dom.n_actions - 1):
            raise DomainMismatch("domain cannot hold this instance's pipeline")
        if dom.n_states > limit:
            raise StateSpaceOverflow(f"{dom.n_states} states exceed the limit of {limit}")
        self.par = par
        self.domain = dom
        K, cap, xm, A = dom.K, dom.cap, dom.x_max, dom.n_actions
        self.top = cap + A - 1                     # largest stock on offer
        self.c_top = xm + A - 1                    # largest arrival next period
        avail = np.arange(self.top + 1)
        self.move = np.zeros((K, self.top + 1, self.top + 1))   # P(left | available)
        self.cost_of = np.zeros((K, self.top + 1))               # expected cost by available
        for j in range(K):
            q = par.demand.pmfs[j]
            d = np.arange(q.size)
            diff = avail[:, None] - avail[None, :]
            ok = (diff >= 0) & (diff < q.size) & (avail[None, :] >= 1)
            self.move[j] = np.where(ok, q[np.clip(diff, 0, q.size - 1)], 0.0)
            tail = np.concatenate([np.cumsum(q[::-1])[::-1], [0.0]])
            self.move[j][:, 0] = tail[np.minimum(avail, q.size)]
            self.cost_of[j] = (par.h * np.maximum(avail[:, None] - d, 0)
                               + par.p * np.maximum(d - avail[:, None], 0)) @ q

        # index arrays for every (x1, oh, a) and lead outcome
        self.leads = [(l, pr) for l, pr in enumerate(par.leadtime.probs) if pr > 0]
        x1 = np.arange(xm + 1)[:, None, None]
        oh = np.arange(cap + 1)[None, :, None]
        a = np.arange(A)[None, None, :]
        self.outcomes = []
        for l, pr in self.leads:
            rem = np.full(x1.shape, l) if par.leadtime.crossover else np.maximum(l, (x1 > 0).astype(int))
            rem = np.broadcast_to(rem, (xm + 1, cap + 1, A))
            now = (rem == 0) & (a > 0)
            av = oh + np.where(now, a, 0)
            arrive = x1 + np.where((rem == 1) & (a > 0), a, 0)
            nxt_x = np.where((rem == 2) & (a > 0), a, 0)
            self.outcomes.append((pr, av, arrive, nxt_x))
        self.C = np.zeros(dom.shape + (A,))
        for j in range(K):
            for pr, av, _, _ in self.outcomes:
                self.C[j] += pr * self.cost_of[j][av]
        self.clipped = self._count_clipped()
        self._rows = None

    def _count_clipped(self):
        n = 0
        for pr, av, arrive, _ in self.outcomes:
            n += int(np.count_nonzero(av + arrive > self.domain.cap))
        return n

    # -- Bellman pieces --------------------------------------------------

    def expect(self, h):
        """E[h(next state)] for every (state, action); h has the domain shape."""
        dom = self.domain
        K, cap, xm, A = dom.K, dom.cap, dom.x_max, dom.n_actions
        out = np.zeros(dom.shape + (A,))
        left = np.arange(self.top + 1)[:, None]
        c = np.arange(self.c_top + 1)[None, :]
        land = np.minimum(left + c, cap)                     # (left, c)
        for j in range(K):
            hn = h[(j + 1) % K]                              # (x1', oh')
            table = hn[:, land]                              # (x1', left, c)
            g = np.einsum("al,xlc->axc", self.move[j], table)  # (avail, x1', c)
            for pr, av, arrive, nxt_x in self.outcomes:
                out[j] += pr * g[av, nxt_x, arrive]
        return out

    def q_values(self, h):
        return self.C + self.expect(h)

    def rows(self):
        """Dense next-state distributions, shape domain + (actions,) + domain."""
        if self._rows is not None:
            return self._rows
        dom = self.domain
        size = dom.n_states * dom.n_actions * dom.n_states
        if size > 5 * 10**7:
            raise StateSpaceOverflow("dense transition rows too large for this domain")
        K, cap, xm, A = dom.K, dom.cap, dom.x_max, dom.n_actions
        R = np.zeros(dom.shape + (A, K, xm + 1, cap + 1))
        left = np.arange(self.top + 1)
        for j in range(K):
            jn = (j + 1) % K
            for pr, av, arrive, nxt_x in self.outcomes:
                probs = self.move[j][av]                            # (x1, oh, a, left)
                land = np.minimum(left + arrive[..., None], cap)      # (x1, oh, a, left)
                xi, oi, ai = np.indices(av.shape)
                for lv in range(self.top + 1):
                    np.add.at(R[j], (xi, oi, ai, jn, nxt_x, land[..., lv]), pr * probs[..., lv])
        self._rows = R.reshape(dom.n_states, A, dom.n_states)
        return self._rows

    def policy_matrix(self, policy):
        """Sparse transition matrix of a stationary policy table."""
        dom = self.domain
        K, cap, xm, A = dom.K, dom.cap, dom.x_max, dom.n_actions
        policy = np.asarray(policy).reshape(dom.shape)
        rows, cols, vals = [], [], []
        left = np.arange(self.top + 1)
        idx = np.arange(dom.n_states).reshape(dom.shape)
        xi, oi = np.indices((xm + 1, cap + 1))
        for j in range(K):
            jn = (j + 1) % K
            a = policy[j]
            for pr, av, arrive, nxt_x in self.outcomes:
                av_s, ar_s, nx_s = av[xi, oi, a], arrive[xi, oi, a], nxt_x[xi, oi, a]
                probs = pr * self.move[j][av_s]                                  # (x1, oh, left)
                land = np.minimum(left + ar_s[..., None], cap)
                dest = idx[jn][nx_s[..., None], land]
                src = np.broadcast_to(idx[j][..., None], dest.shape)
                keep = probs > 0
                rows.append(src[keep])
                cols.append(dest[keep])
                vals.append(probs[keep])
        n = dom.n_states
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    def policy_costs(self, policy):
        policy = np.asarray(policy).reshape(self.domain.shape)
        return np.take_along_axis(self.C, policy[..., None], axis=-1)[..., 0].ravel()


def enumerate_transitions(par: Parameterization, domain: Domain | None = None) -> TruncatedInstance:
    return TruncatedInstance(par, domain)


def dp_average_cost(trunc: TruncatedInstance, tol=1e-9, max_iter=10**6, tau=0.5, ref=0):
    """Relative value iteration on the aperiodicity-transformed chain.

    Mixing the identity into the dynamics (weight 1 - tau) removes the
    periodicity that cyclic phases would otherwise cause; the gain of the
    transformed problem is tau times the original.  Stops when the span of
    successive differences drops below ``tol``.

    Returns (gain, policy table, relative values).
    """
    shape = trunc.domain.shape
    h = np.zeros(shape)
    for it in range(max_iter):
        q = trunc.q_values(h)
        best = q.min(axis=-1)
        new = (1 - tau) * h + tau * best
        diff = new - h
        span = diff.max() - diff.min()
        h = new - new.flat[ref]
        if span < tol:
            gain = 0.5 * (diff.max() + diff.min()) / tau
            policy = np.argmin(trunc.q_values(h), axis=-1)
            _warn_if_clipping(trunc, policy)
            return float(gain), policy, h
    raise NotConverged(f"relative value iteration did not converge in {max_iter} iterations")


def stationary(P):
    n = P.shape[0]
    A = (P.T - sparse.identity(n, format="csr")).tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    pi = spsolve(A.tocsc(), b)
    return np.maximum(pi, 0.0) / np.maximum(pi, 0.0).sum()


def policy_gain(trunc: TruncatedInstance, policy) -> float:
    """Exact long-run average cost of a stationary policy table (unichain)."""
    pi = stationary(trunc.policy_matrix(policy))
    return float(pi @ trunc.policy_costs(policy))


def _warn_if_clipping(trunc, policy):
    if not trunc.clipped:
        return
    pi = stationary(trunc.policy_matrix(policy))
    dom = trunc.domain
    pol = np.asarray(policy).reshape(dom.shape)
    mass = 0.0
    xi, oi = np.indices((dom.x_max + 1, dom.cap + 1))
    for j in range(dom.K):
        a = pol[j]
        over = np.zeros(a.shape, bool)
        for _, av, arrive, _ in trunc.outcomes:
            over |= (av + arrive)[xi, oi, a] > dom.cap
        mass += pi.reshape(dom.shape)[j][over].sum()
    if mass > 1e-12:
        log.warning("on-hand cap %d is reached with stationary probability %.3g; results are clipped",
                    dom.cap, mass)


def base_stock_table(trunc: TruncatedInstance, levels, cap=None):
    """Order-up-to (optionally capped) policy as a table on the domain."""
    dom = trunc.domain
    m = mdp.action_bound(trunc.par) if cap is None else min(cap, mdp.action_bound(trunc.par))
    levels = np.asarray(levels).reshape(-1)
    pos = np.arange(dom.x_max + 1)[:, None] + np.arange(dom.cap + 1)[None, :]
    table = np.stack([np.clip(levels[j % levels.size] - pos, 0, m) for j in range(dom.K)])
    return np.minimum(table, dom.n_actions - 1)


def best_base_stock(trunc: TruncatedInstance):
    """Exhaustive search over per-phase order-up-to levels 0..I_max."""
    import itertools
    imax = mdp.base_stock_levels(trunc.par)
    best = (np.inf, None)
    for levels in itertools.product(*[range(int(s) + 1) for s in imax]):
        g = policy_gain(trunc, base_stock_table(trunc, levels))
        if g < best[0] - 1e-12:
            best = (g, levels)
    return best[1], best[0]


class TablePolicy(LanePolicy):
    """A policy table from the oracle, used on simulator lanes."""

    def __init__(self, table):
        self.table = np.asarray(table)

    def act(self, table, lanes):
        K, X, O = self.table.shape
        x1 = np.minimum(lanes.qty[:, 0], X - 1) if X > 1 else np.zeros_like(lanes.on_hand)
        return self.table[lanes.phase, x1, np.minimum(lanes.on_hand, O - 1)]


# -- distance and bound ----------------------------------------------------

def param_distance(p1: Parameterization, p2: Parameterization, domain: Domain | None = None) -> float:
    """Largest one-step cost gap plus C_max times the L1 gap of next-state laws."""
    dom = domain or shared_domain(p1, p2)
    t1, t2 = TruncatedInstance(p1, dom), TruncatedInstance(p2, dom)
    c_max = max(np.abs(t1.C).max(), np.abs(t2.C).max())
    dc = np.abs(t1.C - t2.C).reshape(dom.n_states, dom.n_actions)
    df = np.abs(t1.rows() - t2.rows()).sum(axis=-1)
    return float((dc + c_max * df).max())


def finite_horizon_cost(trunc_seq, policy, s0, T):
    """Exact expected mean cost over T periods; step t uses trunc_seq[t]."""
    dist = np.zeros(trunc_seq[0].domain.n_states)
    dist[s0] = 1.0
    total = 0.0
    cache = {}
    for t in range(T):
        tr = trunc_seq[t]
        if id(tr) not in cache:
            cache[id(tr)] = (tr.policy_matrix(policy), tr.policy_costs(policy))
        P, c = cache[id(tr)]
        total += dist @ c
        dist = P.T @ dist
    return total / T


def bound_check(policy, p_true: Parameterization, p_hat_seq, s0=0, T=None, domain=None, slack=1e-9,
                distance=None):
    """Compare the exact cost gap with the weighted distance bound.

    Returns (lhs, rhs, holds).  Both sides are exact expectations on the
    truncated domain, so the slack only absorbs rounding.  ``distance``
    replaces the parameterization distance (an audit hook).
    """
    distance = distance or param_distance
    p_hat_seq = list(p_hat_seq)
    T = T or len(p_hat_seq)
    dom = domain
    if dom is None:
        dom = natural_domain(p_true)
        for ph in p_hat_seq:
            d2 = shared_domain(p_true, ph)
            dom = Domain(dom.K, max(dom.cap, d2.cap), max(dom.x_max, d2.x_max), max(dom.n_actions, d2.n_actions))
        if dom.x_max:
            dom = Domain(dom.K, dom.cap, dom.n_actions - 1, dom.n_actions)
    truth = TruncatedInstance(p_true, dom)
    uniq = {}
    seq = []
    for ph in p_hat_seq[:T]:
        if id(ph) not in uniq:
            uniq[id(ph)] = (TruncatedInstance(ph, dom), distance(p_true, ph, dom))
        seq.append(uniq[id(ph)])
    lhs = abs(finite_horizon_cost([s[0] for s in seq], policy, s0, T)
              - finite_horizon_cost([truth] * T, policy, s0, T))
    rhs = sum((1 + (T - t) / 2) * seq[t - 1][1] for t in range(1, T + 1)) / T
    return lhs, rhs, bool(lhs <= rhs + slack)
