import numpy as np
import pytest

from mackrl.core.common_knowledge import CircularMask, common_knowledge_closed_form, observe
from mackrl.core.verification import verify_envs
from mackrl.envs import make_env
from mackrl.envs.gridworld import (
    CAPTURE,
    DOWN,
    RIGHT,
    STAY,
    UP,
    GridState,
    GridWorldConfig,
    GridWorldEnv,
    grid_reset,
    grid_step,
    prey_id,
)
from mackrl.errors import ConfigError, DomainError


def make_state(agents, prey):
    return GridState(
        agents=np.array(agents),
        prey=np.array(prey),
        alive=np.ones(len(prey), dtype=bool),
    )


@pytest.fixture
def config():
    return GridWorldConfig(size=8, n_agents=2, n_prey=2, radius=2.5, horizon=10, prey_move_prob=0.0)


def test_lone_agent_sees_only_itself(config):
    world = make_state([[0, 0], [7, 7]], [[7, 0], [0, 7]]).world()
    assert observe(world, 0, CircularMask(config.radius)).ids() == [0]


def test_pair_within_radius_shares_common_knowledge(config):
    world = make_state([[0, 0], [1, 0]], [[0, 1], [7, 7]]).world()
    ck = common_knowledge_closed_form(world, (0, 1), CircularMask(config.radius))
    assert ck.entities == frozenset({0, 1, prey_id(0)})


def test_single_capturer_only_pays_the_step_penalty(config):
    state = make_state([[3, 3], [6, 6]], [[3, 4], [0, 0]])
    next_state, reward, done = grid_step(config, state, (CAPTURE, STAY), np.random.default_rng(0))
    assert reward == pytest.approx(config.step_penalty)
    assert next_state.alive.all()
    assert not done


def test_two_adjacent_capturers_remove_the_prey(config):
    state = make_state([[3, 3], [3, 5]], [[3, 4], [0, 0]])
    next_state, reward, done = grid_step(config, state, (CAPTURE, CAPTURE), np.random.default_rng(0))
    assert reward == pytest.approx(config.capture_reward + config.step_penalty)
    assert list(next_state.alive) == [False, True]
    assert next_state.captures == [(0, (0, 1))]
    assert not done
    assert prey_id(0) not in next_state.world()


def test_last_capture_ends_the_episode():
    config = GridWorldConfig(size=4, n_agents=2, n_prey=1, prey_move_prob=0.0)
    state = make_state([[1, 0], [1, 2]], [[1, 1]])
    _, _, done = grid_step(config, state, (CAPTURE, CAPTURE), np.random.default_rng(0))
    assert done


def test_moves_are_clipped_to_the_grid(config):
    state = make_state([[7, 7], [0, 0]], [[4, 4], [5, 5]])
    next_state, _, _ = grid_step(config, state, (RIGHT, DOWN), np.random.default_rng(0))
    np.testing.assert_array_equal(next_state.agents, [[7, 7], [0, 0]])
    next_state, _, _ = grid_step(config, next_state, (STAY, UP), np.random.default_rng(0))
    np.testing.assert_array_equal(next_state.agents[1], [0, 1])


def test_invalid_actions(config):
    state = make_state([[3, 3], [3, 5]], [[3, 4], [0, 0]])
    with pytest.raises(DomainError):
        grid_step(config, state, (6, 0), np.random.default_rng(0))
    with pytest.raises(DomainError):
        grid_step(config, state, (0,), np.random.default_rng(0))


def test_horizon_ends_the_episode():
    config = GridWorldConfig(size=8, n_agents=2, n_prey=1, horizon=3, prey_move_prob=0.0)
    env = GridWorldEnv(config)
    env.reset(np.random.default_rng(3))
    dones = [env.step((STAY, STAY))[1] for _ in range(3)]
    assert dones == [False, False, True]
    with pytest.raises(DomainError):
        env.step((STAY, STAY))


def test_reset_places_entities_on_distinct_cells(config):
    state = grid_reset(config, np.random.default_rng(7))
    cells = {tuple(xy) for xy in np.concatenate([state.agents, state.prey])}
    assert len(cells) == config.n_agents + config.n_prey
    assert ((0 <= state.agents) & (state.agents < config.size)).all()


def test_env_encodings_have_declared_sizes():
    env = GridWorldEnv(GridWorldConfig(n_agents=3, n_prey=2))
    env.reset(np.random.default_rng(2))
    inputs = env.tree_inputs()
    groups = {group for group, _ in inputs.group_features}
    assert groups == {(0, 1, 2), (0, 1), (0, 2), (1, 2)}
    for key, features in inputs.group_features.items():
        assert features.shape == (env.group_feature_size,), key
    assert inputs.agent(2).shape == (env.agent_feature_size,)
    assert env.state_features().shape == (env.state_feature_size,)
    assert inputs.joint_features.shape == (env.joint_feature_size,)


def test_ck_richness_counts_shared_prey():
    env = GridWorldEnv(GridWorldConfig(size=8, n_agents=2, n_prey=2, radius=2.5))
    env.reset(np.random.default_rng(0))
    env.state = make_state([[0, 0], [1, 0]], [[0, 1], [7, 7]])
    env._refresh()
    assert env.ck_richness((0, 1), 0) == 1
    assert env.ck_richness((0, 1), 1) == 1


def test_invalid_config():
    with pytest.raises(DomainError):
        GridWorldConfig(n_agents=1)
    with pytest.raises(DomainError):
        GridWorldConfig(size=2, n_agents=3, n_prey=2)
    with pytest.raises(ConfigError):
        make_env("gridworld", {"walls": True})


def test_observations_and_decentralised_execution():
    results = {r.name: r for r in verify_envs(samples=2000, seed=3)}
    assert results["gridworld observations are exactly the visible entities"].passed
    coherent = results["gridworld decentralised execution is coherent"]
    assert coherent.passed, coherent.detail
