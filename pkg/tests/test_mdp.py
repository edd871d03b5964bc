import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ted import mdp
from ted.mdp import ContractViolation, Order, State
from ted.params import deterministic_lead, make_parameterization


def poisson5(p=9.0, lead=0, L=2):
    return make_parameterization(p, [5.0], [math.sqrt(5.0)], deterministic_lead(lead, L).probs)


def point(d, p=9.0, lead=0, L=2):
    return make_parameterization(p, [float(d)], [0.0], deterministic_lead(lead, L).probs)


def test_initial_state():
    assert mdp.initial_state(poisson5()) == State(0, (), 0)
    assert mdp.initial_state(point(4)) == mdp.initial_state(poisson5())


def test_empty_system_loses_all_demand():
    par = point(3)
    out = mdp.step(mdp.initial_state(par), 0, par, 0.5, 0.5)
    assert out.cost == 9.0 * 3 and out.observation.censored and out.observation.sale == 0


@pytest.mark.parametrize("args,expected", [((7, 7, 1, 9), 0), ((10, 4, 1, 9), 6), ((3, 8, 1, 39), 195)])
def test_period_cost_examples(args, expected):
    assert mdp.period_cost(*args) == expected


@pytest.mark.parametrize("args,expected", [((7, 10, 1, 5), 35), ((10, 4, 1, 5), 14), ((0, 3, 1, 5), 0)])
def test_period_profit_examples(args, expected):
    assert mdp.period_profit(*args) == expected


def test_cost_and_profit_against_brute_force():
    for av in range(21):
        for d in range(21):
            lost = sum(1 for k in range(d) if k >= av)
            left = sum(1 for k in range(av) if k >= d)
            sold = d - lost
            assert mdp.period_cost(av, d, 1.0, 9.0) == 1.0 * left + 9.0 * lost
            assert mdp.period_profit(av, d, 1.0, 9.0) == 9.0 * sold - 1.0 * left


def test_action_bound_examples():
    assert mdp.action_bound(poisson5()) == 8
    assert mdp.action_bound(point(4, p=37.0)) == 4
    # p = h makes the fractile the median; p_min validation lives in SpaceBounds, not here
    assert mdp.action_bound(poisson5(p=1.0)) == 5


def test_base_stock_bound_examples():
    assert mdp.base_stock_bound(poisson5()) == 8
    assert mdp.base_stock_bound(point(4, lead=1)) == 8
    assert mdp.base_stock_bound(poisson5(lead=2)) == 20


def test_transition_examples():
    par = make_parameterization(9.0, [5.0], [math.sqrt(5.0)], [1.0, 0, 0])
    out = mdp.step(State(2, (), 0), 0, par, 0.0, 0.0, demand=5)
    assert out.next_state.on_hand == 0 and out.cost == 27 and out.profit == 18
    out = mdp.step(State(4, (), 0), 0, par, 0.0, 0.0, demand=1)
    assert out.next_state.on_hand == 3 and out.cost == 3 and not out.observation.censored


def test_crossover_schedule():
    par = make_parameterization(9.0, [3.0], [1.0], [0, 0.5, 0.5, 0, 0], True)
    s = State(0, (Order(2, 5, 1), Order(1, 4, 3)), 0)
    out = mdp.step(s, 0, par, 0.3, 0.3, demand=0)
    assert out.next_state.on_hand == 5
    assert [(o.qty, o.remaining) for o in out.next_state.orders] == [(4, 2)]
    assert out.observation.arrivals == (3,)


def test_action_above_bound_rejected():
    par = poisson5()
    with pytest.raises(ContractViolation):
        mdp.step(mdp.initial_state(par), mdp.action_bound(par) + 1, par, 0.5, 0.5)


def test_immediate_delivery_only_behind_empty_pipeline():
    par = make_parameterization(9.0, [3.0], [1.0], [0.5, 0.0, 0.5], False)
    lead0 = 0.1                       # inverse CDF gives lead 0
    out = mdp.step(State(0, (), 0), 3, par, 0.5, lead0, demand=0)
    assert out.next_state.on_hand == 3 and out.observation.arrivals == (0,)
    s = State(0, (Order(1, 2, 1),), 0)
    out = mdp.step(s, 3, par, 0.5, lead0, demand=0)
    # FIFO: the new order waits for the older one and lands with it
    assert out.next_state.on_hand == 5 and sorted(out.observation.arrivals) == [1, 2]


lead_vectors = st.sampled_from([
    ([1.0, 0, 0], False), ([0, 1.0, 0], False), ([0, 0, 1.0], False),
    ([0.3, 0.3, 0.4], False), ([0.3, 0.3, 0.4], True), ([0, 0.5, 0.5], True), ([0.2, 0, 0.8], False),
])


@given(lead_vectors, st.integers(0, 2**31), st.floats(2.0, 4.0), st.floats(0.0, 1.0))
def test_conservation_and_fifo(lead, seed, mu, t):
    probs, cross = lead
    sd = mdp.math.sqrt(mu) * (0.5 + t)
    par = make_parameterization(9.0, [mu], [min(sd, 2 * mu)], probs, cross)
    rng = np.random.default_rng(seed)
    s = mdp.initial_state(par)
    placed, received = [], []
    for t in range(60):
        a = int(rng.integers(0, mdp.action_bound(par) + 1))
        out = mdp.step(s, a, par, *rng.random(2))
        ns = out.next_state
        immediate = a if 0 in out.observation.arrivals else 0
        arrived = sum(o.qty for o in s.orders) + (a - immediate if a else 0) - sum(o.qty for o in ns.orders)
        # stock conservation: next on-hand + sales = on-hand + arrivals now (+ next-period landings)
        assert ns.on_hand + out.observation.sale == s.on_hand + immediate + arrived
        assert out.cost >= 0
        if a > 0:
            placed.append((t, a))
        for age in sorted(out.observation.arrivals, reverse=True):
            received.append(t - age + (0 if age == 0 else 1))
        s = ns
    if not cross:
        assert received == sorted(received)


def test_crossover_realized_lead_distribution():
    probs = np.array([0.1, 0.3, 0.6])
    par = make_parameterization(9.0, [3.0], [1.5], probs, True)
    rng = np.random.default_rng(7)
    s = mdp.initial_state(par)
    counts = np.zeros(3)
    for _ in range(100_000):
        out = mdp.step(s, 1, par, rng.random(), rng.random())
        for age in out.observation.arrivals:
            counts[age] += 1
        s = out.next_state
    assert np.abs(counts / counts.sum() - probs).sum() < 0.02


def test_trajectory_rows_layout():
    par = poisson5()
    s = mdp.initial_state(par)
    out = mdp.step(s, 2, par, 0.5, 0.5)
    rows = mdp.trajectory_rows([s], [2], [out], 2)
    assert rows[0][:5] == [0, 0, 0, 0, 0] and rows[0][5] == 2
