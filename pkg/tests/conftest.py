import numpy as np
import pytest

from mackrl.core.policy_tree import PolicyTree
from mackrl.core.verification import random_tree, random_tree_inputs
from mackrl.utils.config_loader import RunConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long training runs, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tree3(rng):
    return random_tree(rng, 3, 3)


@pytest.fixture
def tree_inputs(tree3, rng):
    return random_tree_inputs(tree3, rng)


@pytest.fixture
def uniform_tree():
    """Linear heads start at zero, so every controller is uniform"""
    return PolicyTree(3, 2, 4, 4, architecture="linear")


@pytest.fixture
def small_matrix_config():
    return RunConfig(
        run_id="test",
        env="matrix",
        env_config={"ck_fraction": 0.5},
        algorithm="mackrl",
        seeds=[0],
        total_env_steps=64,
        eval_interval=32,
        eval_episodes=8,
        n_envs=2,
        batch_size=16,
        lr_actor=0.005,
        lr_critic=0.005,
        gamma=1.0,
    )
