import itertools

import numpy as np
import pytest

from ted import audit, mdp, oracle
from ted.evaluation import EvalConfig
from ted.params import make_parameterization


def bernoulli(p=9.0):
    return make_parameterization(p, [0.5], [0.5], [1.0, 0.0], False)


def brute_rows(par, dom):
    """Next-state laws and expected costs for lead <= 1, straight from the period dynamics.

    States are (phase, on hand); the in-transit slot is always empty on
    such domains.  Returns C of shape (S, A) and F of shape (S, A, S).
    """
    K, cap, A = dom.K, dom.cap, dom.n_actions
    S = K * (cap + 1)
    C, F = np.zeros((S, A)), np.zeros((S, A, S))
    for j, oh, a in itertools.product(range(K), range(cap + 1), range(A)):
        s = j * (cap + 1) + oh
        for lead, pl in enumerate(par.leadtime.probs):
            if pl == 0:
                continue
            avail = oh + (a if lead == 0 else 0)
            incoming = a if lead == 1 else 0
            for d, q in enumerate(par.demand.pmfs[j]):
                w = pl * q
                C[s, a] += w * (par.h * max(avail - d, 0) + par.p * max(d - avail, 0))
                nxt = ((j + 1) % K) * (cap + 1) + min(max(avail - d, 0) + incoming, cap)
                F[s, a, nxt] += w
    return C, F


def brute_distance(p1, p2, dom):
    C1, F1 = brute_rows(p1, dom)
    C2, F2 = brute_rows(p2, dom)
    c_max = max(np.abs(C1).max(), np.abs(C2).max())
    return float((np.abs(C1 - C2) + c_max * np.abs(F1 - F2).sum(axis=-1)).max())


def test_bernoulli_gain_and_level():
    tr = oracle.enumerate_transitions(bernoulli())
    g, pol, _ = oracle.dp_average_cost(tr)
    assert g == pytest.approx(0.5, abs=1e-8)
    levels, g_bs = oracle.best_base_stock(tr)
    assert tuple(levels) == (1,) and g_bs == pytest.approx(0.5, abs=1e-10)


def test_transition_rows_sum_to_one(desk):
    rng = np.random.default_rng(0)
    for _ in range(5):
        tr = oracle.enumerate_transitions(audit.tiny_instance(rng))
        assert np.allclose(tr.rows().sum(axis=-1), 1.0, rtol=0, atol=1e-10)


def test_empty_system_cost_is_penalty_times_mean():
    par = make_parameterization(9.0, [1.7, 0.8], [1.0, 0.9], [0.0, 1.0], False)
    tr = oracle.enumerate_transitions(par)
    for j, q in enumerate(par.demand.pmfs):
        assert tr.C[j, 0, 0, 0] == pytest.approx(9.0 * (np.arange(q.size) @ q), abs=1e-12)


def test_deterministic_demand_costs_nothing():
    tr = oracle.enumerate_transitions(make_parameterization(9.0, [2.0], [0.0], [1.0, 0.0], False))
    g, _, _ = oracle.dp_average_cost(tr)
    assert abs(g) < 1e-8


def _cesaro_gain(P, c, T=4000):
    """Worst-start average cost over T periods; tends to the gain for every policy."""
    dist = np.eye(P.shape[0])
    total = np.zeros(P.shape[0])
    for _ in range(T):
        total += dist @ c
        dist = dist @ P
    return (total / T).max()


def test_gain_matches_enumeration_of_all_policies():
    par = make_parameterization(1.0, [0.5], [0.5], [1.0, 0.0], False)    # p = h
    tr = oracle.enumerate_transitions(par)
    dom = tr.domain
    assert dom.n_states <= 50
    g, _, _ = oracle.dp_average_cost(tr)
    rows, C = tr.rows(), tr.C.reshape(dom.n_states, -1)
    best = np.inf
    for pol in itertools.product(range(dom.n_actions), repeat=dom.n_states):
        idx = np.arange(dom.n_states)
        best = min(best, _cesaro_gain(rows[idx, pol], C[idx, pol]))
    assert g == pytest.approx(best, abs=2e-3)


def test_gain_invariant_to_reference_state():
    rng = np.random.default_rng(1)
    tr = oracle.enumerate_transitions(audit.tiny_instance(rng, K=2))
    g0, _, _ = oracle.dp_average_cost(tr, ref=0)
    g1, _, _ = oracle.dp_average_cost(tr, ref=tr.domain.n_states - 1)
    assert g0 == pytest.approx(g1, abs=1e-8)


def test_exact_gain_of_dp_policy_equals_value_iteration():
    rng = np.random.default_rng(2)
    for _ in range(3):
        tr = oracle.enumerate_transitions(audit.tiny_instance(rng))
        g, pol, _ = oracle.dp_average_cost(tr)
        assert oracle.policy_gain(tr, pol) == pytest.approx(g, abs=1e-7)


def test_distance_identity_and_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = audit.tiny_instance(rng)
        b = audit.perturbed(a, rng)
        assert oracle.param_distance(a, a) == 0.0
        assert oracle.param_distance(a, b) == oracle.param_distance(b, a)


def test_penalty_only_distance_closed_form():
    dist_pmfs = ([1.5, 0.7], [1.1, 0.8])
    a = make_parameterization(5.0, *dist_pmfs, [1.0, 0.0], False)
    b = make_parameterization(8.0, *dist_pmfs, [1.0, 0.0], False)
    top_mean = max(np.arange(q.size) @ q for q in a.demand.pmfs)
    assert oracle.param_distance(a, b) == pytest.approx(3.0 * top_mean, abs=1e-9)


def test_distance_matches_independent_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(15):
        a = audit.tiny_instance(rng)
        b = audit.perturbed(a, rng)
        dom = oracle.shared_domain(a, b)
        assert oracle.param_distance(a, b, dom) == pytest.approx(brute_distance(a, b, dom), abs=1e-9)


def test_mismatched_domains_rejected():
    a = make_parameterization(5.0, [1.0], [1.0], [1.0, 0.0], False)
    b = make_parameterization(5.0, [1.0, 1.0], [1.0, 1.0], [1.0, 0.0], False)
    with pytest.raises(oracle.DomainMismatch):
        oracle.param_distance(a, b)


def test_bound_with_exact_estimates_is_tight():
    par = audit.tiny_instance(np.random.default_rng(5))
    tr = oracle.enumerate_transitions(par)
    pol = oracle.base_stock_table(tr, mdp.base_stock_levels(par))
    lhs, rhs, holds = oracle.bound_check(pol, par, [par] * 10, domain=tr.domain)
    assert lhs == 0.0 and rhs == 0.0 and holds


def test_bound_single_period_is_plain_distance():
    rng = np.random.default_rng(6)
    for _ in range(10):
        truth = audit.tiny_instance(rng)
        est = audit.perturbed(truth, rng)
        dom = oracle.shared_domain(truth, est)
        tr = oracle.TruncatedInstance(truth, dom)
        pol = oracle.base_stock_table(tr, mdp.base_stock_levels(truth))
        lhs, rhs, holds = oracle.bound_check(pol, truth, [est], T=1, domain=dom)
        assert rhs == pytest.approx(oracle.param_distance(truth, est, dom), rel=1e-12)
        assert holds


def test_bound_audit_trials_and_negated_distance():
    rng = np.random.default_rng(7)
    assert all(audit.bound_trial(rng, 12).holds for _ in range(10))
    rng = np.random.default_rng(7)
    assert not all(audit.bound_trial(rng, 12, flip=True).holds for _ in range(10))


def test_dp_bridge_on_tiny_instances():
    rng = np.random.default_rng(8)
    cfg = EvalConfig(runs=50, horizon=1000, warmup=50, seed=3)
    rows = [audit.dp_bridge(audit.tiny_instance(rng), cfg) for _ in range(3)]
    assert all(r.ok for r in rows)
