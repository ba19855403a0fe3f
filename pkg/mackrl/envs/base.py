"""Interface the trainer expects from an environment."""

import logging

import numpy as np

from mackrl.core.partitions import all_pairs
from mackrl.core.policy_tree import TreeInputs

logger = logging.getLogger(__name__)


class Environment:
    """Episodic multi-agent environment seen through common knowledge

    Subclasses implement ``reset``, ``step``, ``group_view``, ``agent_view``,
    ``state_features`` and ``ck_richness``.
    """

    name = "base"
    n_agents = 0
    n_actions = 0
    group_feature_size = 0
    agent_feature_size = 0
    state_feature_size = 0

    def __init__(self):
        self.rng = None
        self.t = 0
        self.done = True

    @property
    def joint_feature_size(self):
        return self.n_agents * self.agent_feature_size

    @property
    def groups(self):
        """Groups with a controller in a pairwise tree: the root and every pair"""
        root = tuple(range(self.n_agents))
        groups = [root]
        groups.extend(pair for pair in all_pairs(self.n_agents) if pair != root)
        return groups

    def reset(self, rng):
        """Start a new episode drawing from the private ``rng``"""
        raise NotImplementedError

    def step(self, joint_action):
        """Apply a joint action; returns (reward, done)"""
        raise NotImplementedError

    def group_view(self, group, viewer):
        """Encoding of ``viewer``'s belief about the common knowledge of ``group``"""
        raise NotImplementedError

    def agent_view(self, agent):
        """Encoding of one agent's own observation"""
        raise NotImplementedError

    def joint_view(self):
        return np.concatenate([self.agent_view(a) for a in range(self.n_agents)])

    def state_features(self):
        raise NotImplementedError

    def ck_richness(self, group, viewer):
        """Number of non-agent entities in ``viewer``'s belief about ``group``'s common knowledge"""
        raise NotImplementedError

    def world_state(self):
        return None

    def tree_inputs(self):
        """TreeInputs for the current step, one group encoding per (group, viewer)"""
        group_features = {}
        for group in self.groups:
            for viewer in group:
                group_features[(group, viewer)] = self.group_view(group, viewer)
        agent_features = {a: self.agent_view(a) for a in range(self.n_agents)}
        return TreeInputs(group_features, agent_features, joint_features=self.joint_view())

    def describe(self):
        return {"name": self.name, "n_agents": self.n_agents, "n_actions": self.n_actions}
