"""Single-controller joint action learners used as baselines.

``conditioning="union"`` is JAL: one policy over the full joint action space
conditioned on every agent's observation; it needs central execution.
``conditioning="common"`` is CK-JAL: the same policy conditioned only on the
common knowledge of all agents, so every agent can evaluate it, draw the same
joint action from the shared seed and keep its own component.
"""

import logging

import numpy as np

from mackrl.core.approximator import bounded_softmax, greedy_action, make_head, softmax_cotangent
from mackrl.core.correlated_sampling import CorrelatedSampler
from mackrl.core.policy_tree import Controller
from mackrl.errors import DomainError, StructuralError, ZeroProbabilityError

logger = logging.getLogger(__name__)

CONDITIONINGS = ("union", "common")


class JointActionPolicy(Controller):
    NODE_ID = "joint"

    def __init__(self, n_agents, n_actions, n_inputs, conditioning="union",
                 architecture="linear", hidden_size=16, sampler=None, rng=None, init_scale=1.0):
        if conditioning not in CONDITIONINGS:
            raise DomainError(f"Unknown conditioning '{conditioning}', expected one of {CONDITIONINGS}")
        self.n_agents = int(n_agents)
        self.n_actions = int(n_actions)
        self.conditioning = conditioning
        self.root = tuple(range(self.n_agents))
        self.sampler = sampler or CorrelatedSampler()
        self.n_joint = self.n_actions ** self.n_agents
        arch = "mlp" if architecture == "gru" else architecture
        rng = rng if rng is not None else np.random.default_rng(0)
        self.head = make_head(arch, n_inputs, self.n_joint, hidden_size, rng, init_scale)
        logger.debug(f"Joint action policy ({conditioning}): {self.n_joint} joint actions")

    def named_heads(self):
        return [("joint", self.head)]

    def encode(self, joint_action):
        index = 0
        for u in joint_action:
            if not 0 <= int(u) < self.n_actions:
                raise DomainError(f"Action {u} outside 0..{self.n_actions - 1}")
            index = index * self.n_actions + int(u)
        return index

    def decode(self, index):
        actions = []
        for _ in range(self.n_agents):
            index, u = divmod(index, self.n_actions)
            actions.append(u)
        return tuple(reversed(actions))

    def _input(self, inputs, viewer):
        if self.conditioning == "common":
            return inputs.group(self.root, viewer)
        if inputs.joint_features is None:
            raise StructuralError("Joint action learner needs the union of all observations")
        return inputs.joint_features

    def probs(self, inputs, viewer=0, epsilon=0.0):
        logits, _ = self.head.forward(self._input(inputs, viewer))
        return bounded_softmax(logits, epsilon)

    def select_action(self, agent, inputs, seed, greedy=False, epsilon=0.0, trace=None):
        """This agent's share of the commonly sampled joint action"""
        probs = self.probs(inputs, agent, epsilon)
        index = greedy_action(probs) if greedy else self.sampler.sample(probs, seed, self.NODE_ID)
        if trace is not None:
            trace["joint"] = index
        return self.decode(index)[agent]

    def sample_joint_action(self, inputs, seed, greedy=False, epsilon=0.0):
        """The joint action drawn once centrally; returns (joint action, trace)"""
        probs = self.probs(inputs, 0, epsilon)
        index = greedy_action(probs) if greedy else self.sampler.sample(probs, seed, self.NODE_ID)
        return self.decode(index), {"pairs": {}, "joint": index}

    def joint_policy(self, joint_action, inputs, group=None, epsilon=0.0):
        """Probability of ``joint_action`` under the joint controller"""
        if len(joint_action) != self.n_agents:
            raise DomainError(f"Joint action {joint_action} must cover all {self.n_agents} agents")
        return float(self.probs(inputs, 0, epsilon)[self.encode(joint_action)])

    def log_joint_policy_grad(self, joint_action, inputs, group=None, epsilon=0.0):
        return self.log_joint_policy_and_grad(joint_action, inputs, group, epsilon)[1]

    def log_joint_policy_and_grad(self, joint_action, inputs, group=None, epsilon=0.0):
        if len(joint_action) != self.n_agents:
            raise DomainError(f"Joint action {joint_action} must cover all {self.n_agents} agents")
        index = self.encode(joint_action)
        x = self._input(inputs, 0)
        logits, _ = self.head.forward(x)
        soft = bounded_softmax(logits, 0.0)
        probs = bounded_softmax(logits, epsilon)
        if probs[index] <= 0.0:
            raise ZeroProbabilityError(f"Joint action {tuple(joint_action)} has probability zero")
        w = np.zeros(self.n_joint)
        w[index] = 1.0 / probs[index]
        return float(np.log(probs[index])), self.head.grad(x, softmax_cotangent(soft, w, epsilon))
