import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebrl.agents import (
    Agent,
    Hyperparameters,
    ReplayMemory,
    Schedule,
    Transition,
    boltzmann_policy,
    glow_discounted_rewards,
    run_episode,
    sample_action,
    sample_actions,
    td_error,
)
from ebrl.envs import GridWorld, binary_table
from ebrl.models import DEBN, TabularMerit

merit_lists = st.lists(st.floats(-50, 50), min_size=1, max_size=30)


@given(merit_lists, st.floats(0, 20))
def test_policy_is_a_distribution(merits, beta):
    p = boltzmann_policy(merits, beta)
    assert (p >= 0).all()
    assert abs(p.sum() - 1) <= 1e-12


@given(merit_lists, st.floats(0.01, 20))
def test_policy_argmax_matches_merits(merits, beta):
    p = boltzmann_policy(merits, beta)
    # merits closer than float resolution give identical probabilities
    assert p[int(np.argmax(merits))] == p.max()
    assert max(merits) - merits[int(np.argmax(p))] <= 1e-12 * (1 + abs(max(merits)))


def test_cold_policy_breaks_ties_low():
    rng = np.random.default_rng(0)
    assert boltzmann_policy([1.0, 3.0, 3.0], math.inf).tolist() == [0, 1, 0]
    assert {sample_action([0.0, 0.0, 0.0], math.inf, rng) for _ in range(20)} == {0}
    with pytest.raises(ValueError):
        boltzmann_policy([1.0], -1.0)


def test_sampling_frequencies():
    rng = np.random.default_rng(5)
    merits = np.array([0.0, 1.0, 2.0])
    p = boltzmann_policy(merits, 1.0)
    draws = sample_actions(np.tile(merits, (60000, 1)), 1.0, rng)
    np.testing.assert_allclose(np.bincount(draws, minlength=3) / 60000, p, atol=0.01)
    singles = [sample_action(merits, 1.0, rng) for _ in range(20000)]
    np.testing.assert_allclose(np.bincount(singles, minlength=3) / 20000, p, atol=0.015)


@pytest.mark.parametrize("shape", ["linear", "exponential", "tanh"])
def test_schedule_endpoints_and_monotone(shape):
    s = Schedule(0.5, 0.99, 100, shape)
    values = [s.value(t) for t in range(0, 150, 5)]
    assert values[0] == pytest.approx(0.5) and values[-1] == 0.99
    assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))
    assert Schedule(2.0).value(1e6) == 2.0
    with pytest.raises(ValueError):
        Schedule(1.0, 2.0, 0)


def test_hyperparameter_validation():
    with pytest.raises(ValueError):
        Hyperparameters(rule="td")
    with pytest.raises(ValueError):
        Hyperparameters(replay_capacity=5, batch_size=10)
    with pytest.raises(ValueError):
        Hyperparameters(target_sync_unit="epochs")


def test_replay_fifo():
    mem = ReplayMemory(5)
    for i in range(8):
        mem.append(Transition(np.array([i]), i, float(i)))
    recs = mem.records()
    assert len(mem) == 5
    assert [r.a for r in recs] == [3, 4, 5, 6, 7]
    assert all(r.s_next is None for r in recs)
    batch = mem.sample(np.random.default_rng(0), 5)
    assert set(batch["a"].tolist()) <= {3, 4, 5, 6, 7}
    with pytest.raises(ValueError):
        ReplayMemory(3).sample(np.random.default_rng(0), 1)


def test_glow():
    out = glow_discounted_rewards([0.0, 0.0, 1.0], 0.5)
    assert out.tolist() == [0.25, 0.5, 1.0]
    assert glow_discounted_rewards([1.0, 1.0], 0.0).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        glow_discounted_rewards([1.0], 1.5)


def test_td_errors_by_rule():
    t = TabularMerit(2, 2)
    t.table[:] = [[1.0, 2.0], [3.0, 5.0]]
    target = t.copy()
    h = Hyperparameters(gamma=0.5, gamma_ps=0.1)
    assert td_error("q", Transition(0, 0, 1.0, 1), t, target, h) == pytest.approx(1 + 0.5 * 5 - 1)
    assert td_error("q", Transition(0, 0, 1.0, 1, True), t, target, h) == pytest.approx(0.0)
    assert td_error("sarsa", Transition(0, 1, 0.0, 1, a_next=0), t, target, h) == pytest.approx(0.5 * 3 - 2)
    assert td_error("ps", Transition(0, 1, 1.0), t, target, h) == pytest.approx(1 - 0.1 * 2)
    with pytest.raises(ValueError):
        td_error("ps", Transition(0, 1, 1.0, 1), t, target, h)


def test_target_network_staleness():
    rng = np.random.default_rng(0)
    model = DEBN(2, binary_table(4), [4], rng)
    h = Hyperparameters(rule="q", learning_rate=0.01, batch_size=4, replay_capacity=50, target_sync=7, target_sync_unit="steps")
    agent = Agent(model, h, rng)
    frozen = [p.copy() for p in agent.target.params]
    for step in range(1, 30):
        s = rng.normal(size=2)
        agent.memory.append(Transition(s, int(rng.integers(4)), 1.0, rng.normal(size=2)))
        agent.on_step()
        if step % 7:
            assert all(np.array_equal(a, b) for a, b in zip(agent.target.params, frozen))
        else:
            assert all(np.array_equal(a, b) for a, b in zip(agent.target.params, model.params))
            frozen = [p.copy() for p in agent.target.params]
    assert agent.updates > 0


def test_tabular_q_matches_value_iteration():
    # three states in a line; action 1 moves right, action 0 stays; reward on reaching state 2
    nxt = np.array([[0, 1], [1, 2], [2, 2]])
    rew = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    gamma = 0.8
    Q = np.zeros((3, 2))
    for _ in range(500):
        Q = rew + gamma * Q[nxt].max(axis=2)
    table = TabularMerit(3, 2)
    h = Hyperparameters(rule="q", optimizer="sgd", learning_rate=0.5, gamma=gamma, batch_size=1, replay_capacity=1)
    agent = Agent(table, h, np.random.default_rng(0))
    for sweep in range(400):
        for s in range(3):
            for a in range(2):
                agent.train_step({
                    "s": np.array([s]), "a": np.array([a]), "r": np.array([rew[s, a]]),
                    "s_next": np.array([nxt[s, a]]), "done": np.array([False]),
                    "a_next": np.array([-1]), "key_next": np.array([nxt[s, a]]),
                })
        agent.sync_target()
    assert np.abs(table.table - Q).max() < 1e-3


def test_tabular_ps_stays_bounded():
    rng = np.random.default_rng(2)
    table = TabularMerit(1, 3)
    h = Hyperparameters(rule="ps", optimizer="sgd", learning_rate=0.5, gamma_ps=0.05, batch_size=1,
                        replay_capacity=1, target_sync=1, target_sync_unit="updates")
    agent = Agent(table, h, rng)
    rewards = [1.0, 0.4, 0.0]
    for _ in range(3000):
        a = agent.act(0, 0)
        agent.memory.append(Transition(0, a, rewards[a]))
        agent.train_step(agent.memory.sample(rng, 1))
        assert table.table.max() <= max(rewards) / h.gamma_ps + 1e-9


def test_gridworld_episode_with_tabular_agent():
    env = GridWorld(4, cap=50)
    rng = np.random.default_rng(0)
    h = Hyperparameters(rule="ps", batch_size=5, replay_capacity=500)
    agent = Agent(TabularMerit(16, 4), h, rng)
    stats, steps = run_episode(agent, env, record=True)
    assert stats.length == len(steps) == env.t
    assert len(agent.memory) == stats.length
    assert agent.trials == 1
    # the recorded PS transitions carry glowed rewards ending in the terminal reward
    assert agent.memory.records()[-1].r == stats.total_reward


def test_worked_examples():
    e = math.e
    np.testing.assert_allclose(boltzmann_policy([1.0, 0.0], 1.0), [e / (1 + e), 1 / (1 + e)])
    np.testing.assert_allclose(boltzmann_policy([3.0, 1.0, 2.0], 0.7), boltzmann_policy([13.0, 11.0, 12.0], 0.7))
    assert boltzmann_policy([5.0, -2.0, 1.0], 0.0).tolist() == [1 / 3] * 3
    T = 6
    r = np.zeros(T)
    r[-1] = 1.0
    np.testing.assert_allclose(glow_discounted_rewards(r, 0.9), 0.9 ** (T - 1 - np.arange(T)))
    assert glow_discounted_rewards(np.ones(200), 0.5)[0] == pytest.approx(2.0)
    assert Schedule(1.0, 100.0, 10, "linear").value(5) == pytest.approx(50.5)
    t = TabularMerit(2, 2)
    t.table[:] = [[0.5, 0.0], [9.0, 9.0]]
    assert td_error("sarsa", Transition(0, 0, 1.0, 1, a_next=1), t, t.copy(), Hyperparameters(gamma=0.0)) == pytest.approx(0.5)
