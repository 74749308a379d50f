"""Decision rules, evidence bookkeeping, and strategy JSON round-trips."""

import math

import numpy as np
import pytest

from ratebound.network import Network, build_schedule
from ratebound.signal_models import (
    BinarySymmetric,
    Gaussian,
    SignalModel,
    StateSpace,
)
from ratebound.strategies import (
    AgentState,
    AutarkyML,
    ConstantFirstPeriod,
    CoordinationComplete,
    CoordinationConnected,
    OddEven,
    RunContext,
    decisive_state,
    finite_llr_table,
    first_action,
    make_increment_fn,
    ml_action,
    most_popular,
    pair_mean_matrix,
    prior_log_matrix,
    strategy_from_json,
    strategy_to_json,
)

LOG3 = 1.0986122886681098


def binary_model(p=0.75, n_agents=1):
    return SignalModel(StateSpace((0, 1)), BinarySymmetric(p), n_agents)


def make_agent(model, agent=0, neighbors=(0,)):
    return AgentState(
        agent,
        prior_log_matrix(model),
        pair_mean_matrix(model, agent),
        make_increment_fn(model, agent),
        neighbors,
    )


# -- pure decision helpers ------------------------------------------------------


def test_most_popular_breaks_ties_toward_the_lowest_state():
    assert most_popular([1, 1, 0]) == 1
    assert most_popular([0, 1]) == 0
    assert most_popular([2, 1, 2, 1]) == 1
    assert most_popular([3]) == 3
    with pytest.raises(ValueError):
        most_popular([])


def test_first_action_is_the_prior_mode():
    assert first_action((0.5, 0.5)) == 0
    assert first_action((0.2, 0.5, 0.3)) == 1


def test_ml_action_picks_the_dominating_row():
    L = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert ml_action(L) == 1
    assert ml_action(np.zeros((3, 3))) == 0
    # No row dominates here; the row-sum fallback resolves the stalemate.
    cyclic = np.array([[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
    assert ml_action(cyclic) == 0


def test_decisive_state_thresholds():
    means = np.array([[0.0, 1.0], [1.0, 0.0]])
    L = np.array([[0.0, 4.1], [-4.1, 0.0]])
    assert decisive_state(L, means, 0.2, 5) == 0
    assert decisive_state(L, means, 0.2, 6) is None
    # the diagonal never blocks: its threshold -delta * t is negative
    assert decisive_state(np.zeros((2, 2)), means, 0.5, 1) is None


# -- evidence tables ---------------------------------------------------------------


def test_prior_log_matrix_vanishes_for_uniform_priors():
    assert np.array_equal(prior_log_matrix(binary_model()), np.zeros((2, 2)))
    skewed = SignalModel(
        StateSpace((0, 1), prior=(0.8, 0.2)), BinarySymmetric(0.75)
    )
    mat = prior_log_matrix(skewed)
    assert mat[0, 1] == pytest.approx(math.log(4.0), rel=1e-14)
    assert mat[1, 0] == -mat[0, 1]


def test_pair_mean_matrix_golden():
    means = pair_mean_matrix(binary_model(0.75), 0)
    assert means[0, 0] == 0.0 and means[1, 1] == 0.0
    assert means[0, 1] == pytest.approx(0.5 * LOG3, rel=1e-14)
    assert means[1, 0] == pytest.approx(0.5 * LOG3, rel=1e-14)


def test_finite_llr_table_golden_and_exact_antisymmetry():
    table = finite_llr_table(binary_model(0.75), 0)
    assert table.shape == (2, 2, 2)
    assert table[0, 0, 1] == pytest.approx(LOG3, rel=1e-15)
    assert table[1, 0, 1] == pytest.approx(-LOG3, rel=1e-15)
    assert np.array_equal(table, -np.swapaxes(table, 1, 2))


def test_increment_fn_matches_llr_for_both_families():
    model = binary_model(0.75)
    fn = make_increment_fn(model, 0)
    for s in (0, 1):
        inc = fn(s)
        assert inc[0, 1] == pytest.approx(model.llr(0, 0, 1, s), rel=1e-15)
        assert inc[1, 0] == -inc[0, 1]
    gaussian = SignalModel(StateSpace((0, 1)), Gaussian((1.0, 0.0), 2.0))
    gfn = make_increment_fn(gaussian, 0)
    for x in (-0.7, 0.3, 2.2):
        assert gfn(x)[0, 1] == pytest.approx(
            gaussian.llr(0, 0, 1, x), rel=1e-14
        )


# -- agent state --------------------------------------------------------------------


def test_agent_state_accumulates_evidence_on_top_of_the_prior():
    model = binary_model(0.75)
    agent = make_agent(model)
    assert np.array_equal(agent.L, prior_log_matrix(model))
    agent.absorb(0)
    agent.absorb(0)
    agent.absorb(1)
    assert agent.t == 3
    assert agent.last_signal == 1
    assert agent.L[0, 1] == pytest.approx(LOG3, rel=1e-12)


def test_agent_state_records_only_observed_neighbors():
    model = binary_model(0.75, n_agents=3)
    agent = make_agent(model, agent=0, neighbors=(0, 1))
    agent.record(0, 1)
    agent.record(1, 0)
    agent.record(2, 0)  # not a neighbor: silently dropped
    assert agent.own_actions == [1]
    assert agent.history == {0: [1], 1: [0]}
    assert 2 not in agent.history


# -- strategies ---------------------------------------------------------------------


def test_autarky_follows_the_evidence():
    model = binary_model(0.75)
    ctx = RunContext(n=1, first_action=0)
    agent = make_agent(model)
    agent.absorb(1)
    assert AutarkyML().act(agent, 1, ctx) == 1
    agent.absorb(0)
    agent.absorb(0)
    assert AutarkyML().act(agent, 3, ctx) == 0


def test_coordination_starts_at_the_prior_mode_then_follows_the_crowd():
    model = binary_model(0.75, n_agents=3)
    ctx = RunContext(n=3, first_action=0, delta=0.05)
    agent = make_agent(model, agent=0, neighbors=(0, 1, 2))
    strategy = CoordinationComplete(delta=0.05)
    agent.absorb(1)
    assert strategy.act(agent, 1, ctx) == 0
    # a lone contrary signal is not decisive at t=2, so plurality wins
    for j, action in ((0, 0), (1, 1), (2, 1)):
        agent.record(j, action)
    agent.absorb(0)
    assert strategy.act(agent, 2, ctx) == 1


def test_coordination_overrides_the_crowd_on_decisive_evidence():
    model = binary_model(0.75, n_agents=3)
    ctx = RunContext(n=3, first_action=0, delta=0.05)
    agent = make_agent(model, agent=0, neighbors=(0, 1, 2))
    strategy = CoordinationComplete(delta=0.05)
    agent.absorb(0)
    strategy.act(agent, 1, ctx)
    for j in range(3):
        agent.record(j, 1)
    agent.absorb(0)
    # two matching signals: L[0, 1] = 2 log 3 >= (m - delta) * 2
    assert strategy.act(agent, 2, ctx) == 0


def test_coordination_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        CoordinationComplete(delta=0.0)
    with pytest.raises(ValueError):
        CoordinationConnected(delta=-1.0)


def test_connected_coordination_displays_what_the_schedule_directs():
    net = Network.directed_cycle(3)
    schedule = build_schedule(net)
    model = binary_model(0.75, n_agents=3)
    ctx = RunContext(n=3, first_action=0, delta=0.05, schedule=schedule)
    strategy = CoordinationConnected(delta=0.05)
    # agent 1 observes agent 0; at offset 1 (round j=0, k=0) she imitates him
    agent = make_agent(model, agent=1, neighbors=(0, 1))
    agent.absorb(1)
    assert strategy.act(agent, 1, ctx) == 0  # voting period: prior mode
    agent.record(0, 1)  # agent 0 voted 1
    agent.record(1, 0)
    agent.absorb(1)
    assert strategy.act(agent, 2, ctx) == 1  # displays the observed vote
    # agent 2 does not observe agent 0: at offset 1 she repeats her own vote
    bystander = make_agent(model, agent=2, neighbors=(1, 2))
    bystander.absorb(1)
    assert strategy.act(bystander, 1, ctx) == 0
    bystander.record(2, 0)
    bystander.record(1, 1)
    bystander.absorb(1)
    assert strategy.act(bystander, 2, ctx) == 0


def test_odd_even_split_roles():
    model = binary_model(0.75, n_agents=4)
    table = finite_llr_table(model, 0)
    ctx = RunContext(
        n=4, first_action=0, llr_weight=float(table[0, 0, 1])
    )
    odd = make_agent(model, agent=1, neighbors=(0, 1, 2, 3))
    odd.absorb(1)
    assert OddEven().act(odd, 1, ctx) == 1
    odd.absorb(0)
    assert OddEven().act(odd, 2, ctx) == 0
    even = make_agent(model, agent=0, neighbors=(0, 1, 2, 3))
    even.absorb(0)
    for j, action in ((0, 0), (1, 1), (2, 0), (3, 1)):
        even.record(j, action)
    even.absorb(1)
    # both revealed signals said 1, so the tally favors state 1
    assert OddEven().act(even, 2, ctx) == 1


def test_constant_strategy_never_moves():
    model = binary_model(0.75)
    ctx = RunContext(n=1, first_action=0)
    agent = make_agent(model)
    agent.absorb(1)
    assert ConstantFirstPeriod(0).act(agent, 1, ctx) == 0
    assert ConstantFirstPeriod(1).act(agent, 1, ctx) == 1
    with pytest.raises(ValueError):
        ConstantFirstPeriod(-1)


# -- JSON ----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "strategy",
    [
        AutarkyML(),
        CoordinationComplete(),
        CoordinationComplete(delta=0.07),
        CoordinationConnected(delta=0.05),
        OddEven(),
        ConstantFirstPeriod(1),
    ],
)
def test_strategy_json_round_trip(strategy):
    assert strategy_from_json(strategy_to_json(strategy)) == strategy


def test_strategy_from_json_rejects_malformed_documents():
    with pytest.raises(ValueError):
        strategy_from_json({})
    with pytest.raises(ValueError):
        strategy_from_json({"strategy": "telepathy"})
    with pytest.raises(ValueError):
        strategy_from_json({"strategy": "constant"})
