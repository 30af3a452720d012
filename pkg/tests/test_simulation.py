import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from karma_pricing.decision import DecisionContext, decision_cost_oracle
from karma_pricing.distributions import PointMass, Uniform
from karma_pricing.errors import ConfigError
from karma_pricing.pricing import Bracket, PricingPolicy
from karma_pricing.simulation import (PHASE_BALANCED, PHASE_BRS, SimulationSettings, apply_outcome,
                                      compute_ne, fairness_metrics, init_population, make_rng,
                                      run)

UNIT_PRICES = PricingPolicy(brackets=(Bracket(0.0, math.inf, Fraction(1), Fraction(-1)),),
                            scale=Fraction(1), kind="equity")


def _pop(game, policy, karma, weights):
    s = SimulationSettings(agents=len(weights), rounds=0, karma_init=PointMass(karma))
    return init_population(game, policy, s, make_rng(0), weights=weights)


def test_single_agent_point_mass(game, equity_policy):
    pop = _pop(game, equity_policy, 60.0, [1.0])
    assert pop.size == 1 and pop.karma_of(0) == 60


def test_initial_karma_in_range(game, equity_policy):
    s = SimulationSettings(agents=500, rounds=0, karma_init=Uniform(50.0, 100.0))
    pop = init_population(game, equity_policy, s, make_rng(4))
    k = pop.karma_values()
    assert k.min() >= 49 and k.max() < 100
    assert 0.5 <= pop.weights.min() and pop.weights.max() <= 1.5


def test_missing_karma_distribution_rejected(game, equity_policy):
    with pytest.raises(ConfigError):
        init_population(game, equity_policy, SimulationSettings(agents=2, rounds=0), make_rng(0))


@pytest.mark.parametrize("kw", [dict(agents=0), dict(rounds=-1), dict(snap="nearest"),
                                dict(karma_grid=Fraction(0))])
def test_settings_validation(kw):
    with pytest.raises(ConfigError):
        SimulationSettings(**kw)


def test_broke_agents_all_take_second(game, model):
    pop = _pop(game, UNIT_PRICES, 0.0, [1.0, 1.0, 2.0])
    part = np.array([True, True, False])
    out = compute_ne(pop, part, np.array([1.9, 0.1, 1.0]), model, 1.0)
    assert out.choices.tolist() == [2, 2, 0]
    assert out.w == (0.0, 0.5) and out.phase == PHASE_BRS
    assert out.latencies[1] == pytest.approx(2 * (1 + 0.15 * (0.5 / (2 / 3)) ** 4))


def test_nobody_participating(game, model, equity_policy):
    pop = _pop(game, equity_policy, 80.0, [1.0, 1.0])
    out = compute_ne(pop, np.zeros(2, bool), np.ones(2), model, 1.0)
    assert out.choices.tolist() == [0, 0]
    assert out.w == (0.0, 0.0) and out.latencies == (1.0, 2.0)


def test_all_rich_overload_falls_back_to_balanced_fill(game, model):
    # karma 10 clears k11 = 4.8, so everyone wants resource 1 and l1 would exceed l2
    pop = _pop(game, UNIT_PRICES, 10.0, [1.0, 1.0, 1.0])
    urg = np.array([0.2, 1.7, 0.9])
    out = compute_ne(pop, np.ones(3, bool), urg, model, 1.0)
    assert out.phase == PHASE_BALANCED
    eq = brentq(lambda w: 1 + 0.15 * (w / 0.5) ** 4 - 2 * (1 + 0.15 * ((1 - w) / (2 / 3)) ** 4),
                0.0, 1.0, xtol=1e-14)
    count = round(3 * eq)  # eq ~ 0.81, so two of three
    assert count == 2
    # highest urgencies get the fast resource
    assert out.choices.tolist() == [2, 1, 1]


def test_balanced_fill_drops_least_urgent(game, model):
    pop = _pop(game, UNIT_PRICES, 10.0, [1.0] * 8)
    urg = np.array([0.9, 0.1, 1.8, 1.1, 0.05, 1.3, 0.7, 1.6])
    out = compute_ne(pop, np.ones(8, bool), urg, model, 1.0)
    # target ~0.81 * 8 = 6.5 rounds to 6; agents 1 and 4 have the lowest urgency
    assert out.phase == PHASE_BALANCED
    assert np.flatnonzero(out.choices == 2).tolist() == [1, 4]


def test_balanced_fill_keeps_broke_agents_on_second(game, model):
    # five rich agents alone overload resource 1 (w1 = 5/6); the broke one has top urgency
    pop = _pop(game, UNIT_PRICES, 10.0, [1.0] * 6)
    pop.karma[1] = 0
    urg = np.array([0.2, 1.9, 0.9, 1.2, 0.4, 1.5])
    out = compute_ne(pop, np.ones(6, bool), urg, model, 1.0)
    assert out.phase == PHASE_BALANCED
    eq = brentq(lambda w: 1 + 0.15 * (w / 0.5) ** 4 - 2 * (1 + 0.15 * ((1 - w) / (2 / 3)) ** 4),
                0.0, 1.0, xtol=1e-14)
    assert round(6 * eq) == 5  # every free agent fits under the balanced target
    assert out.choices.tolist() == [1, 2, 1, 1, 1, 1]


def test_golden_two_round_trace(game, model, so):
    """Three unit-weight agents at prices (1, -1) with karma 0, 2 and 10."""
    pop = _pop(game, UNIT_PRICES, 0.0, [1.0, 1.0, 1.0])
    unit = int(pop.unit[0])
    pop.karma[:] = np.array([0, 2, 10]) * unit
    # round 1: agent 0 is broke (-> 2), agent 1 sits in (k12, k21] = (1, 2.8] so
    # urgency 1.5 > 1 picks resource 1, agent 2 is above k11 = 4.8 (-> 1)
    out = compute_ne(pop, np.ones(3, bool), np.array([0.3, 1.5, 0.1]), model, 1.0, t=1, so=so)
    assert out.choices.tolist() == [2, 1, 1]
    apply_outcome(pop, out)
    assert [pop.karma_of(i) for i in range(3)] == [1, 1, 9]
    assert out.payment == 1
    # round 2: agent 1 absent; agent 0 now at k12 with low urgency goes to 2
    out = compute_ne(pop, np.array([True, False, True]), np.array([0.5, 2.0, 0.7]), model, 1.0,
                     t=2, so=so)
    assert out.choices.tolist() == [2, 0, 1]
    apply_outcome(pop, out)
    assert [pop.karma_of(i) for i in range(3)] == [2, 1, 8]
    assert pop.participations.tolist() == [2, 1, 2]
    assert out.payment == 0


def test_fairness_fixture():
    class P:
        participations = np.array([1, 1, 1, 1])
        cumulative_latency = np.array([1.0, 1.0, 2.0, 2.0])
        weights = np.array([1.0, 2.0, 1.0, 2.0])
        size = 4

        def average_latency(self):
            return self.cumulative_latency

    f = fairness_metrics(P())
    assert f.ineqt == pytest.approx(0.5)
    assert f.mean_latency == pytest.approx(1.5)
    lw = np.array([1.0, 0.5, 2.0, 1.0])
    assert f.ineql == pytest.approx(lw.std())
    assert f.ineqt_participants == f.ineqt


@pytest.fixture(scope="module")
def short_run(game, model, so, equity_policy):
    s = SimulationSettings(agents=200, rounds=300, seed=5, karma_init=Uniform(50.0, 100.0),
                           snapshot_rounds=(0, 300))
    return run(game, equity_policy, model, s, so=so)


def test_karma_is_conserved_exactly(short_run):
    pop = short_run.population
    start = sum(a.karma for a in short_run.snapshots[0])
    # each round moves karma p1 n1 - |p2| n2 out of the population; reconstruct from counts
    paid = sum(Fraction(round(r[3] * 200)) * 7 - Fraction(round(r[4] * 200)) * 10
               for r in short_run.rows)
    assert pop.total_karma() == start - paid
    assert sum(a.karma for a in short_run.snapshots[300]) == pop.total_karma()


def test_rows_are_one_based_and_shares_consistent(short_run):
    t = short_run.column("t")
    assert t[0] == 1 and t[-1] == 300
    w = short_run.column("w1") + short_run.column("w2")
    n = short_run.column("n1") + short_run.column("n2")
    assert np.all(w <= 1 + 1e-12) and np.all(n <= 1 + 1e-12)
    assert abs(n.mean() - 0.95) < 0.01


def test_zero_rounds_is_empty(game, model, so, equity_policy):
    s = SimulationSettings(agents=10, rounds=0, karma_init=Uniform(50.0, 100.0))
    series = run(game, equity_policy, model, s, so=so)
    assert len(series) == 0 and series.column("w1").size == 0


def test_same_seed_same_series(game, model, so, equality):
    policy, _ = equality
    s = SimulationSettings(agents=100, rounds=50, seed=11, karma_init=Uniform(50.0, 100.0))
    a = run(game, policy, model, s, so=so)
    b = run(game, policy, model, s, so=so)
    assert a.rows == b.rows
    assert np.array_equal(a.population.karma, b.population.karma)


def test_unaffordable_payment_raises(game, model):
    pop = _pop(game, UNIT_PRICES, 0.0, [1.0])
    out = compute_ne(pop, np.ones(1, bool), np.ones(1), model, 1.0)
    out.choices[:] = 1
    with pytest.raises(RuntimeError, match="negative karma"):
        apply_outcome(pop, out)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.permutations(range(12)))
def test_shares_invariant_under_relabelling(game, model, seed, perm):
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.5, 1.5, 12)
    karma = rng.integers(0, 60, 12)
    part = rng.random(12) < 0.9
    urg = rng.uniform(0, 2, 12)
    perm = np.array(perm)
    policy = PricingPolicy(brackets=(Bracket(0.0, math.inf, Fraction(7), Fraction(-10)),),
                           scale=Fraction(10), kind="equity")
    outs = []
    for order in (np.arange(12), perm):
        pop = _pop(game, policy, 0.0, weights[order])
        pop.karma[:] = karma[order] * pop.unit
        outs.append(compute_ne(pop, part[order], urg[order], model, 1.0))
    assert outs[0].w == pytest.approx(outs[1].w, abs=1e-15)
    assert outs[0].phase == outs[1].phase
    if outs[0].phase == PHASE_BRS:
        assert np.array_equal(outs[0].choices[perm], outs[1].choices)


def test_brs_choices_match_oracle(game, model, so, equity_policy):
    s = SimulationSettings(agents=300, rounds=0, karma_init=Uniform(0.0, 44.0))
    pop = init_population(game, equity_policy, s, make_rng(8))
    rng = make_rng(9)
    part = rng.random(pop.size) < 0.95
    urg = rng.uniform(0.0, 2.0, pop.size)
    out = compute_ne(pop, part, urg, model, 1.0, so=so)
    assert out.phase == PHASE_BRS
    prices = equity_policy.brackets[0].prices
    for i in np.flatnonzero(part):
        ctx = DecisionContext(pop.karma_of(i), prices, float(urg[i]))
        c1, c2, best = decision_cost_oracle(ctx, out.latencies, game.participation,
                                            game.horizon, 1.0)
        chosen = c1 if out.choices[i] == 1 else c2
        # no profitable unilateral deviation
        assert chosen <= min(c1, c2) + 1e-9 * max(1.0, abs(chosen))


@pytest.mark.slow
def test_choice_frequency_uncorrelated_with_weight_under_equity(game, model, so, equity_policy):
    s = SimulationSettings(agents=1000, rounds=3000, seed=1, karma_init=Uniform(50.0, 100.0))
    pop = run(game, equity_policy, model, s, so=so).population
    share1 = pop.picks1 / pop.participations
    assert abs(np.corrcoef(pop.weights, share1)[0, 1]) < 0.05
