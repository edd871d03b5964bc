"""Online estimates of demand and lead times from what a retailer observes.

Demand is only seen through sales; a sale equal to the stock on offer is a
censored observation.  Each cycle phase gets its own product-limit
(Kaplan-Meier) distribution, with deaths counted before censorings at tied
values.  Survival left over after the data (the largest value was censored)
goes to the largest observed value, or to D_max when no sale at all was
uncensored; ``tail="top"`` always uses D_max instead.  Lead times are
seen exactly on arrival and estimated by relative frequency.  Components
without data fall back to the most pessimistic deterministic values.

Observations are kept as per-value counts, which carry everything the
product-limit estimator needs.  The functions accept leading batch
dimensions so many trajectories can be estimated at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mdp
from .params import (LeadTimeSpec, Parameterization, SpaceBounds, fit_two_moment, make_demand,
                     sigma_min, truncate_renormalize)


@dataclass(frozen=True)
class DemandObs:
    value: int
    censored: bool
    phase: int = 0


TAIL_RULES = ("largest", "top")


def km_from_counts(exact, censored, tail: str = "largest"):
    """Product-limit CDF on 0..D_max from per-value counts.

    ``exact`` and ``censored`` have shape (..., D_max + 1).  Writing
    n(v) for the number of observations at or above v, the survival
    product telescopes to n(v+1) / N times the factors (1 + c(u)/n(u+1))
    for u <= v, so without censoring the result is exactly the empirical
    CDF.  Once nobody is left at risk the survival stays at its last value;
    ``tail`` says where that residual mass goes (see the module docstring).
    """
    if tail not in TAIL_RULES:
        raise ValueError(f"tail must be one of {TAIL_RULES}")
    exact = np.asarray(exact, dtype=np.float64)
    censored = np.asarray(censored, dtype=np.float64)
    total = exact + censored
    N = total.sum(axis=-1, keepdims=True)
    if np.any(N == 0):
        raise ValueError("product-limit estimate needs at least one observation")
    at_risk = np.cumsum(total[..., ::-1], axis=-1)[..., ::-1]
    beyond = np.concatenate([at_risk[..., 1:], np.zeros_like(N)], axis=-1)
    live = beyond > 0
    boost = np.where((censored > 0) & live, 1.0 + censored / np.where(live, beyond, 1.0), 1.0)
    prod = np.cumprod(boost, axis=-1)
    # first value with nobody beyond it, and the product just before it
    first = np.argmax(~live, axis=-1)[..., None]
    before = np.where(first > 0, np.take_along_axis(prod, np.maximum(first - 1, 0), axis=-1), 1.0)
    residual = before * np.take_along_axis(censored, first, axis=-1)
    surv = np.where(live, beyond * prod, residual)
    cdf = (N - surv) / N
    cdf[..., -1] = 1.0
    if tail == "largest":
        has_exact = exact.sum(axis=-1, keepdims=True) > 0
        cdf = np.where(has_exact & (np.arange(cdf.shape[-1]) >= first), 1.0, cdf)
    return cdf


def km_cdf(obs, D_max: int, tail: str = "largest") -> np.ndarray:
    """Product-limit CDF of one phase's observations; values above D_max are clipped."""
    obs = list(obs)
    if not obs:
        raise ValueError("product-limit estimate needs at least one observation")
    exact = np.zeros(D_max + 1)
    cens = np.zeros(D_max + 1)
    for o in obs:
        v = min(int(o.value), D_max)
        if o.censored:
            cens[v] += 1
        else:
            exact[v] += 1
    return km_from_counts(exact, cens, tail)


def moments_from_cdf(cdf, bounds: SpaceBounds | None = None):
    """Mean and standard deviation of the pmf behind ``cdf``.

    With ``bounds`` the mean is clamped to [mu_min, mu_max] and the standard
    deviation then to [sigma_min(mean), 2 mean].  Accepts leading batch dims.
    """
    cdf = np.asarray(cdf, dtype=np.float64)
    pmf = np.diff(cdf, axis=-1, prepend=0.0)
    x = np.arange(cdf.shape[-1])
    mu = pmf @ x
    var = np.einsum("...i,...i->...", pmf, (x - mu[..., None]) ** 2)
    sd = np.sqrt(np.maximum(var, 0.0))
    if bounds is not None:
        mu = np.clip(mu, bounds.mu_min, bounds.mu_max)
        frac = mu - np.floor(mu)
        sd = np.clip(sd, np.sqrt(frac * (1 - frac)), 2 * mu)
    if mu.ndim == 0:
        return float(mu), float(sd)
    return mu, sd


def leadtime_estimate(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("no lead-time observations")
    return counts / total


@dataclass
class Knowns:
    """What the deployment loop is told up front.

    h, p, K and the crossover flag are always known.  ``demand`` and
    ``lead`` carry the true specs when declared known, else None.
    """
    p: float
    K: int
    crossover: bool
    L_max: int
    demand: object = None
    lead: LeadTimeSpec | None = None

    @classmethod
    def from_truth(cls, par: Parameterization, demand_known=False, lead_known=False):
        return cls(par.p, par.K, par.leadtime.crossover, par.L_max,
                   par.demand if demand_known else None,
                   par.leadtime if lead_known else None)


def fallback_demand(bounds: SpaceBounds):
    return bounds.mu_max, sigma_min(bounds.mu_max)


def fallback_lead(L_max: int) -> LeadTimeSpec:
    probs = np.zeros(L_max + 1)
    probs[L_max] = 1.0
    return LeadTimeSpec(False, probs)


def fallback_parameterization(knowns: Knowns, bounds: SpaceBounds) -> Parameterization:
    """Deterministic worst case for every unknown component: demand mu_max, lead L_max."""
    mu, sd = fallback_demand(bounds)
    demand = knowns.demand or make_demand([mu] * knowns.K, [sd] * knowns.K, bounds.eps)
    lead = knowns.lead or fallback_lead(knowns.L_max)
    return Parameterization(knowns.p, demand, lead)


@dataclass
class EstimatorState:
    knowns: Knowns
    D_max: int
    tail: str = "largest"
    exact: np.ndarray = None      # (K, D_max + 1)
    censored: np.ndarray = None
    lead_counts: np.ndarray = None  # (L_max + 1,)
    periods: int = 0

    def __post_init__(self):
        K, L = self.knowns.K, self.knowns.L_max
        if self.exact is None:
            self.exact = np.zeros((K, self.D_max + 1))
            self.censored = np.zeros((K, self.D_max + 1))
            self.lead_counts = np.zeros(L + 1)

    def phase_log(self, j):
        """Observations of phase j as (value, censored) pairs in value order."""
        out = []
        for v in np.flatnonzero(self.exact[j] + self.censored[j]):
            out += [DemandObs(int(v), False, j)] * int(self.exact[j, v])
            out += [DemandObs(int(v), True, j)] * int(self.censored[j, v])
        return out


def new_estimator(knowns: Knowns, D_max: int, tail: str = "largest") -> EstimatorState:
    return EstimatorState(knowns, D_max, tail)


def update(est: EstimatorState, obs: mdp.Observation | None) -> EstimatorState:
    """Fold one period's observation into ``est`` (in place; also returned)."""
    if obs is None:
        return est
    v = min(int(obs.sale), est.D_max)
    if obs.censored:
        est.censored[obs.phase, v] += 1
    else:
        est.exact[obs.phase, v] += 1
    for lead in obs.arrivals:
        est.lead_counts[lead] += 1
    est.periods += 1
    return est


def assemble_estimate(est: EstimatorState, bounds: SpaceBounds) -> Parameterization:
    kn = est.knowns
    if kn.demand is not None:
        demand = kn.demand
    else:
        seen = (est.exact + est.censored).sum(axis=1) > 0
        mu0, sd0 = fallback_demand(bounds)
        means, stds = [mu0] * kn.K, [sd0] * kn.K
        for j in np.flatnonzero(seen):
            means[j], stds[j] = moments_from_cdf(km_from_counts(est.exact[j], est.censored[j], est.tail), bounds)
        demand = make_demand(means, stds, bounds.eps)
    if kn.lead is not None:
        lead = kn.lead
    elif est.lead_counts.sum() > 0:
        probs = leadtime_estimate(est.lead_counts)
        lead = LeadTimeSpec(kn.crossover and np.count_nonzero(probs) > 1, probs)
    else:
        lead = fallback_lead(kn.L_max)
    return Parameterization(kn.p, demand, lead)


# -- many trajectories at once -------------------------------------------

def _fractile_bound(mu, sd, frac, eps):
    cdf = np.cumsum(truncate_renormalize(fit_two_moment(mu, sd), eps))
    return int(np.searchsorted(cdf, frac - 1e-12))


class BatchEstimator:
    """Estimator state for many lanes, each with its own true instance.

    Only the phase that produced the latest observation is re-estimated
    each period; all other phases keep their previous values.
    """

    def __init__(self, table, inst, bounds: SpaceBounds, D_max: int, demand_known=False, lead_known=False,
                 tail="largest"):
        inst = np.asarray(inst, dtype=np.int64)
        self.tail = tail
        self.table = table
        self.inst = inst
        self.bounds = bounds
        self.D_max = D_max
        self.demand_known = demand_known
        self.lead_known = lead_known
        B, Kb, L = inst.size, bounds.K_max, bounds.L_max
        self.K = table.K[inst]
        self.exact = np.zeros((B, Kb, D_max + 1))
        self.cens = np.zeros((B, Kb, D_max + 1))
        self.lead_counts = np.zeros((B, L + 1))
        self.frac = table.p[inst] / (table.p[inst] + table.h[inst])
        mu0, sd0 = fallback_demand(bounds)
        if demand_known:
            self.mu, self.sigma = table.mu[inst].copy(), table.sigma[inst].copy()
            self.m_phase = None
        else:
            self.mu = np.full((B, Kb), mu0, dtype=np.float64)
            self.sigma = np.full((B, Kb), sd0, dtype=np.float64)
            fb = [_fractile_bound(mu0, sd0, f, bounds.eps) for f in self.frac]
            self.m_phase = np.repeat(np.array(fb, np.int64)[:, None], Kb, axis=1)
        if lead_known:
            self.lead_probs = table.lead_probs[inst].copy()
            self.crossover = table.crossover[inst].copy()
        else:
            self.lead_probs = np.zeros((B, L + 1))
            self.lead_probs[:, L] = 1.0
            self.crossover = np.zeros(B, bool)

    @property
    def m(self):
        if self.m_phase is None:
            return self.table.m[self.inst]
        live = np.arange(self.bounds.K_max) < self.K[:, None]
        return np.where(live, self.m_phase, 0).max(axis=1)

    def observe(self, res):
        B = self.inst.size
        rows = np.arange(B)
        if not self.demand_known:
            v = np.minimum(res.sale, self.D_max)
            ph = res.phase
            np.add.at(self.cens, (rows, ph, v), res.censored)
            np.add.at(self.exact, (rows, ph, v), ~res.censored)
            cdf = km_from_counts(self.exact[rows, ph], self.cens[rows, ph], self.tail)
            mu, sd = moments_from_cdf(cdf, self.bounds)
            changed = (mu != self.mu[rows, ph]) | (sd != self.sigma[rows, ph])
            self.mu[rows, ph] = mu
            self.sigma[rows, ph] = sd
            for b in np.flatnonzero(changed):
                self.m_phase[b, ph[b]] = _fractile_bound(mu[b], sd[b], self.frac[b], self.bounds.eps)
        if not self.lead_known:
            self.lead_counts[:, 1:] += res.arrived[:, :self.bounds.L_max] > 0
            self.lead_counts[:, 0] += res.immediate
            seen = self.lead_counts.sum(axis=1) > 0
            if seen.any():
                probs = self.lead_counts[seen] / self.lead_counts[seen].sum(axis=1, keepdims=True)
                self.lead_probs[seen] = probs
                self.crossover[seen] = self.table.crossover[self.inst[seen]] & (np.count_nonzero(probs, axis=1) > 1)
