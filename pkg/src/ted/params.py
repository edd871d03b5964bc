"""Parameterizations of lost-sales inventory instances.

A parameterization bundles everything exogenous about one instance: the
holding and penalty costs, a cyclic demand pattern given by per-phase mean
and standard deviation, and a lead-time distribution with a flag telling
whether orders may cross.  Demand pmfs are built from the two moments with
binomial / Poisson / negative-binomial mixtures and truncated at a small
tail mass so the simulator can sample them by inverse CDF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

HOLDING_COST = 1.0


class InfeasibleFit(ValueError):
    pass


@dataclass(frozen=True)
class SpaceBounds:
    p_min: float = 2.0
    p_max: float = 100.0
    mu_min: float = 2.0
    mu_max: float = 12.0
    K_max: int = 7
    L_max: int = 10
    eps: float = 1e-4

    def __post_init__(self):
        # plain ints from callers would otherwise leak integer dtypes into numpy state arrays
        for name in ("p_min", "p_max", "mu_min", "mu_max", "eps"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("K_max", "L_max"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not self.p_min >= HOLDING_COST:
            raise ValueError("p_min must be at least the holding cost")
        if not self.p_max >= self.p_min:
            raise ValueError("p_max < p_min")
        if not (0 < self.mu_min <= self.mu_max):
            raise ValueError("need 0 < mu_min <= mu_max")
        if self.K_max < 1 or self.L_max < 0:
            raise ValueError("need K_max >= 1 and L_max >= 0")
        if not (0 < self.eps < 1e-2):
            raise ValueError("eps must lie in (0, 1e-2)")


def sigma_min(mu: float) -> float:
    """Smallest standard deviation of an integer-valued variable with mean mu."""
    f = mu - math.floor(mu)
    return math.sqrt(f * (1.0 - f))


def _support(mu, sigma) -> np.ndarray:
    # 60 standard deviations out; the heaviest tail allowed leaves < 1e-20 behind
    return np.arange(int(mu + 60 * sigma) + 50)


def fit_two_moment(mu: float, sigma: float) -> np.ndarray:
    """Fit an integer distribution to a mean and standard deviation.

    Underdispersed targets get a mixture of Bin(k, q) and Bin(k+1, q),
    equidispersed ones a Poisson, and overdispersed ones a mixture of two
    negative binomials with shapes k and k+1 sharing the success
    probability.  The integer shape k follows from the squared coefficient
    of variation, the mixture weight and success probability from the two
    moment equations.

    Parameters
    ----------
    mu : float
        Target mean, positive.
    sigma : float
        Target standard deviation in [sigma_min(mu), 2 mu].

    Returns
    -------
    numpy.ndarray
        Probabilities on 0..n, before any tail truncation.
    """
    if not mu > 0:
        raise InfeasibleFit(f"mean must be positive, got {mu}")
    lo = sigma_min(mu)
    if sigma < lo - 1e-12 or sigma > 2 * mu + 1e-12:
        raise InfeasibleFit(f"sigma={sigma} outside [{lo}, {2 * mu}] for mu={mu}")
    var = sigma * sigma
    if abs(var - mu) <= 1e-12 * mu:
        return stats.poisson.pmf(_support(mu, sigma), mu)

    a = var / mu**2 - 1.0 / mu
    c = 1.0 + a
    if a < 0:
        k = math.floor(-1.0 / a + 1e-12)
        y = k * (k + 1) / (k + math.sqrt(max(k * k - c * k * (k + 1), 0.0)))
        w = k + 1 - y
        q = min(mu / y, 1.0)
        x = np.arange(k + 2)
        return w * stats.binom.pmf(x, k, q) + (1 - w) * stats.binom.pmf(x, k + 1, q)

    k = math.floor(1.0 / a + 1e-12)
    y = ((k + 1) + math.sqrt(max((k + 1) ** 2 - c * k * (k + 1), 0.0))) / c
    w = k + 1 - y
    q = 1.0 / (1.0 + mu / y)
    x = _support(mu, sigma)
    first = stats.nbinom.pmf(x, k, q) if k > 0 else (x == 0).astype(float)
    return w * first + (1 - w) * stats.nbinom.pmf(x, k + 1, q)


def truncate_renormalize(pmf, eps: float) -> np.ndarray:
    """Cut the upper tail of total mass below eps and rescale.

    The cut sits at the smallest x with P(X > x) < eps.  If discarding that
    tail would move the mean by more than eps * x, the cut moves up until it
    does not, so the mean drift stays within eps * D_max.
    """
    pmf = np.asarray(pmf, dtype=float)
    nz = np.flatnonzero(pmf)
    pmf = pmf[: nz[-1] + 1]
    above = np.append(np.cumsum(pmf[::-1])[::-1][1:], 0.0)
    x = np.arange(pmf.size)
    mean = pmf @ x
    top = int(np.argmax(above < eps))
    while top < pmf.size - 1:
        kept = pmf[: top + 1]
        if abs(kept @ x[: top + 1] / kept.sum() - mean) <= eps * top:
            break
        top += 1
    kept = pmf[: top + 1]
    return kept / kept.sum()


@dataclass(frozen=True, eq=False)
class DemandSpec:
    means: tuple
    stds: tuple
    pmfs: tuple = field(repr=False)

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def d_max(self) -> int:
        return max(len(q) for q in self.pmfs) - 1


def make_demand(means, stds, eps: float = 1e-4) -> DemandSpec:
    means = tuple(float(m) for m in means)
    stds = tuple(float(s) for s in stds)
    if len(means) != len(stds) or not means:
        raise ValueError("need one std per mean and at least one phase")
    pmfs = tuple(truncate_renormalize(fit_two_moment(m, s), eps) for m, s in zip(means, stds))
    return DemandSpec(means, stds, pmfs)


@dataclass(frozen=True, eq=False)
class LeadTimeSpec:
    crossover: bool
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.min() < 0 or abs(probs.sum() - 1) > 1e-12:
            raise ValueError("lead-time probs must be a nonnegative vector summing to 1")
        object.__setattr__(self, "probs", probs)
        if self.deterministic and self.crossover:
            raise ValueError("a deterministic lead time cannot cross")

    @property
    def deterministic(self) -> bool:
        return int(np.count_nonzero(self.probs)) == 1

    @property
    def mean(self) -> float:
        return float(self.probs @ np.arange(self.probs.size))


def deterministic_lead(lead: int, L_max: int) -> LeadTimeSpec:
    probs = np.zeros(L_max + 1)
    probs[lead] = 1.0
    return LeadTimeSpec(False, probs)


@dataclass(frozen=True, eq=False)
class Parameterization:
    p: float
    demand: DemandSpec
    leadtime: LeadTimeSpec
    h: float = HOLDING_COST

    def __post_init__(self):
        if self.h != HOLDING_COST:
            raise ValueError("holding cost is fixed at 1")

    @property
    def K(self) -> int:
        return self.demand.K

    @property
    def L_max(self) -> int:
        return self.leadtime.probs.size - 1

    def same_as(self, other: "Parameterization") -> bool:
        return to_record(self) == to_record(other)


def make_parameterization(p, means, stds, lead_probs, crossover=False, eps=1e-4):
    return Parameterization(float(p), make_demand(means, stds, eps),
                            LeadTimeSpec(bool(crossover), np.asarray(lead_probs, float)))


def lead_window(lo: int, hi: int, scheme: int, L_max: int, rng: np.random.Generator) -> np.ndarray:
    """Lead-time probabilities on lo..hi by scheme 0 (uniform), 1 (two-moment fit) or 2 (random)."""
    probs = np.zeros(L_max + 1)
    width = hi - lo + 1
    if scheme == 0:
        window = np.full(width, 1.0 / width)
    elif scheme == 1:
        fitted = fit_two_moment((lo + hi) / 2, (hi - lo) / 2)
        window = np.zeros(width)
        top = min(hi + 1, fitted.size)
        window[: max(top - lo, 0)] = fitted[lo:top]
        window /= window.sum()
    else:
        window = 1.0 - rng.random(width)
        window /= window.sum()
    probs[lo:hi + 1] = window
    return probs / probs.sum()


def sample_leadtime(bounds: SpaceBounds, rng: np.random.Generator) -> LeadTimeSpec:
    lo = int(rng.integers(0, bounds.L_max + 1))
    hi = int(rng.integers(lo, bounds.L_max + 1))
    if lo == hi:
        return deterministic_lead(lo, bounds.L_max)
    crossover = bool(rng.random() < 0.5)
    probs = lead_window(lo, hi, int(rng.integers(3)), bounds.L_max, rng)
    return LeadTimeSpec(crossover and np.count_nonzero(probs) > 1, probs)


def sample_parameterization(bounds: SpaceBounds, rng: np.random.Generator) -> Parameterization:
    """Draw one instance from the probable parameter space."""
    p = float(rng.uniform(bounds.p_min, bounds.p_max))
    K = int(rng.integers(1, bounds.K_max + 1))
    means, stds = [], []
    for _ in range(K):
        mu = float(rng.uniform(bounds.mu_min, bounds.mu_max))
        means.append(mu)
        stds.append(float(rng.uniform(sigma_min(mu) + 1e-6, 2 * mu)))
    lead = sample_leadtime(bounds, rng)
    return Parameterization(p, make_demand(means, stds, bounds.eps), lead)


# -- text records ---------------------------------------------------------

def to_record(par: Parameterization) -> str:
    """One line: h, p, K, means, stds, crossover flag, lead probs."""
    d = par.demand
    vals = [par.h, par.p, d.K, *d.means, *d.stds, int(par.leadtime.crossover),
            *par.leadtime.probs.tolist()]
    return " ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals)


def from_record(line: str, eps: float = 1e-4) -> Parameterization:
    tok = line.split()
    try:
        h, p, K = float(tok[0]), float(tok[1]), int(tok[2])
        means = [float(t) for t in tok[3:3 + K]]
        stds = [float(t) for t in tok[3 + K:3 + 2 * K]]
        l = int(tok[3 + 2 * K])
        probs = np.array([float(t) for t in tok[4 + 2 * K:]])
    except (IndexError, ValueError) as err:
        raise ValueError(f"malformed parameterization record: {line!r}") from err
    if len(means) != K or len(stds) != K or probs.size == 0:
        raise ValueError(f"malformed parameterization record: {line!r}")
    return Parameterization(p, make_demand(means, stds, eps), LeadTimeSpec(bool(l), probs), h)


# -- engine-wide limits ---------------------------------------------------

def global_limits(bounds: SpaceBounds) -> tuple[int, int]:
    """Largest truncated demand support and largest action bound over the space.

    The extreme is reached at high mean and high dispersion, but we scan a
    small grid rather than trust that monotonicity blindly.
    """
    frac = bounds.p_max / (bounds.p_max + HOLDING_COST)
    d_top, m_top = 0, 0
    for mu in np.linspace(bounds.mu_min, bounds.mu_max, 5):
        for s in np.linspace(sigma_min(mu), 2 * mu, 9):
            pmf = truncate_renormalize(fit_two_moment(mu, s), bounds.eps)
            d_top = max(d_top, pmf.size - 1)
            m_top = max(m_top, int(np.searchsorted(np.cumsum(pmf), frac - 1e-12)))
    return d_top, m_top
