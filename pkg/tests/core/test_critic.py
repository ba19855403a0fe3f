import numpy as np
import pytest

from mackrl.core.critic import (
    AgentCritic,
    CentralCritic,
    action_one_hots,
    one_step_advantages,
    td_lambda_targets,
)
from mackrl.core.policy_tree import TreeInputs
from mackrl.envs.episode import Episode, EpisodeBatch, Transition
from mackrl.errors import DomainError


def test_hand_trajectory():
    targets = td_lambda_targets([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], gamma=0.9, td_lambda=0.8)
    np.testing.assert_allclose(targets, [0.5184, 0.72, 1.0])


def test_lambda_zero_is_one_step_td():
    rewards = np.array([0.5, -1.0, 2.0])
    next_values = np.array([0.3, 0.7, 0.0])
    targets = td_lambda_targets(rewards, next_values, gamma=0.9, td_lambda=0.0)
    np.testing.assert_allclose(targets, rewards + 0.9 * next_values)


def test_lambda_one_gamma_one_is_monte_carlo():
    rewards = np.array([0.5, -1.0, 2.0])
    targets = td_lambda_targets(rewards, np.array([9.0, 9.0, 0.0]), gamma=1.0, td_lambda=1.0)
    np.testing.assert_allclose(targets, [1.5, 1.0, 2.0])


def test_invalid_lambda():
    with pytest.raises(DomainError):
        td_lambda_targets([1.0], [0.0], td_lambda=1.5)
    with pytest.raises(DomainError):
        td_lambda_targets([1.0, 2.0], [0.0], td_lambda=0.5)


def test_advantage_formula():
    np.testing.assert_allclose(one_step_advantages([1.0, 0.0], [0.2, 0.5], [0.5, 0.0], 0.9), [1.25, -0.5])


def test_action_one_hots():
    np.testing.assert_array_equal(action_one_hots(None, 2, 3), np.zeros(6))
    np.testing.assert_array_equal(action_one_hots((2, 0), 2, 3), [0, 0, 1, 1, 0, 0])


def make_episode(rewards, state_size=3, agent_size=2, n_agents=2):
    transitions = []
    prev = None
    for t, r in enumerate(rewards):
        inputs = TreeInputs({}, {a: np.full(agent_size, t + a, dtype=float) for a in range(n_agents)})
        transitions.append(Transition(np.full(state_size, float(t)), inputs, (t % 2, 0), r, None, prev))
        prev = (t % 2, 0)
    return Episode(transitions)


def test_central_critic_regresses_onto_returns():
    critic = CentralCritic(3, 2, 2, hidden_size=8, rng=np.random.default_rng(0), lr=0.02,
                           target_update_interval=1)
    batch = EpisodeBatch([make_episode([0.0, 1.0])])
    first = critic.step(batch, gamma=1.0, td_lambda=1.0)
    for _ in range(500):
        last = critic.step(batch, gamma=1.0, td_lambda=1.0)
    assert last < first
    assert last < 1e-3


def test_target_network_refresh_interval():
    critic = CentralCritic(3, 2, 2, rng=np.random.default_rng(0), lr=0.01, target_update_interval=3)
    batch = EpisodeBatch([make_episode([1.0, 0.0, 1.0])])
    initial = critic.target.params.copy()
    critic.step(batch)
    critic.step(batch)
    np.testing.assert_array_equal(critic.target.params, initial)
    critic.step(batch)
    np.testing.assert_array_equal(critic.target.params, critic.head.params)


def test_central_advantage_is_one_scalar_per_step():
    critic = CentralCritic(3, 2, 2, rng=np.random.default_rng(1))
    episode = make_episode([0.0, 0.0, 1.0])
    advantages = critic.advantages(episode, gamma=0.9)
    assert advantages.shape == (1, 3)
    xs = critic.sequences(episode)[0]
    values = [critic.value(x) for x in xs]
    assert advantages[0, 2] == pytest.approx(1.0 - values[2])
    assert advantages[0, 0] == pytest.approx(0.9 * values[1] - values[0])


def test_agent_critic_has_one_stream_per_agent():
    critic = AgentCritic(2, 2, rng=np.random.default_rng(1))
    advantages = critic.advantages(make_episode([0.0, 1.0]), gamma=1.0)
    assert advantages.shape == (2, 2)
