"""Value critics trained on TD(lambda) targets.

``CentralCritic`` is the centralised baseline V(s_t, u_{t-1}) shared by
MACKRL, Central-V, JAL and CK-JAL. ``AgentCritic`` is the IAC critic: one
shared value head evaluated per agent on that agent's own observation.
Both keep a target copy that is refreshed every ``target_update_interval``
critic updates.
"""

import logging

import numpy as np

from mackrl.core.approximator import Optimiser, ValueHead
from mackrl.errors import DomainError

logger = logging.getLogger(__name__)


def td_lambda_targets(rewards, next_values, gamma=1.0, td_lambda=0.8):
    """Backward lambda-returns of one episode

    ``next_values[t]`` is the target critic's V(s_{t+1}, u_t), zero after the
    terminal step. G_t = r_t + gamma * ((1 - lambda) V_{t+1} + lambda G_{t+1})
    with G_T = V_T.
    """
    if not 0.0 <= td_lambda <= 1.0:
        raise DomainError(f"td_lambda must lie in [0, 1], got {td_lambda}")
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    next_values = np.asarray(next_values, dtype=np.float64)
    if rewards.shape != next_values.shape:
        raise DomainError(f"rewards {rewards.shape} and next values {next_values.shape} differ in shape")
    targets = np.zeros_like(rewards)
    running = next_values[-1] if rewards.size else 0.0
    for t in range(rewards.size - 1, -1, -1):
        running = rewards[t] + gamma * ((1.0 - td_lambda) * next_values[t] + td_lambda * running)
        targets[t] = running
    return targets


def one_step_advantages(rewards, values, next_values, gamma=1.0):
    """A_t = r_t + gamma * V(s_{t+1}, u_t) - V(s_t, u_{t-1})"""
    return np.asarray(rewards) + gamma * np.asarray(next_values) - np.asarray(values)


def action_one_hots(joint_action, n_agents, n_actions):
    """Concatenated one-hot per agent; all zeros before the first step"""
    out = np.zeros(n_agents * n_actions)
    if joint_action is None:
        return out
    for a, u in enumerate(joint_action):
        out[a * n_actions + int(u)] = 1.0
    return out


class ValueCritic:
    """A value head, its target copy and an Adam optimiser"""

    def __init__(self, n_inputs, hidden_size=16, rng=None, lr=0.0005,
                 target_update_interval=200, init_scale=1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.head = ValueHead(n_inputs, hidden_size).initialise(rng, init_scale)
        self.target = ValueHead(n_inputs, hidden_size)
        self.target.params = self.head.params.copy()
        self.optimiser = Optimiser(self.head.params.size, lr=lr)
        self.target_update_interval = int(target_update_interval)
        self.updates = 0

    def sequences(self, episode):
        """Input vectors per value stream: list of (T, n_inputs) arrays"""
        raise NotImplementedError

    def value(self, x):
        """V(x) under the online head"""
        return self.head.value(x)

    def target_value(self, x):
        """V(x) under the target copy"""
        return self.target.value(x)

    def _values(self, head, xs):
        return np.array([head.value(x) for x in xs])

    def _shifted(self, values):
        """V(x_{t+1}) per step with the terminal bootstrap of zero"""
        return np.append(values[1:], 0.0)

    def targets(self, episode, gamma=1.0, td_lambda=0.8):
        """TD(lambda) targets per value stream, bootstrapped from the target copy"""
        rewards = episode.rewards
        return [
            td_lambda_targets(rewards, self._shifted(self._values(self.target, xs)), gamma, td_lambda)
            for xs in self.sequences(episode)
        ]

    def advantages(self, episode, gamma=1.0):
        """Array (streams, T) of one-step advantages under the current critic"""
        rewards = episode.rewards
        out = []
        for xs in self.sequences(episode):
            values = self._values(self.head, xs)
            out.append(one_step_advantages(rewards, values, self._shifted(values), gamma))
        return np.array(out)

    def loss_and_grad(self, batch, gamma=1.0, td_lambda=0.8):
        """Mean of 0.5 (V(x) - G)^2 over every step of every stream"""
        grads = np.zeros(self.head.params.size)
        loss = 0.0
        count = 0
        for episode in batch:
            for xs, targets in zip(self.sequences(episode), self.targets(episode, gamma, td_lambda)):
                for x, target in zip(xs, targets):
                    error = self.head.value(x) - target
                    loss += 0.5 * error * error
                    grads += self.head.grad(x, error)
                    count += 1
        if count == 0:
            return 0.0, grads
        return loss / count, grads / count

    def step(self, batch, gamma=1.0, td_lambda=0.8):
        """One Adam step on the TD(lambda) regression; returns the loss"""
        loss, grads = self.loss_and_grad(batch, gamma, td_lambda)
        self.head.params = self.optimiser.step(self.head.params, grads)
        self.updates += 1
        if self.updates % self.target_update_interval == 0:
            self.sync_target()
        return loss

    def sync_target(self):
        """Copy the online head into the target"""
        self.target.params = self.head.params.copy()
        logger.debug(f"Critic target refreshed after {self.updates} updates")

    def get_parameters(self):
        """Flat copy of the online head's weights"""
        return self.head.params.copy()

    def set_parameters(self, flat):
        """Replace the online head's weights"""
        self.head.params = flat


class CentralCritic(ValueCritic):
    """V(s_t, u_{t-1}) on the full state and the previous joint action"""

    def __init__(self, state_feature_size, n_agents, n_actions, **kwargs):
        self.n_agents = n_agents
        self.n_actions = n_actions
        super().__init__(state_feature_size + n_agents * n_actions, **kwargs)

    def features(self, state, prev_action):
        """State features followed by the previous joint action one-hots"""
        return np.concatenate([state, action_one_hots(prev_action, self.n_agents, self.n_actions)])

    def sequences(self, episode):
        """One stream: the central input at every step"""
        return [[self.features(t.state, t.prev_action) for t in episode.transitions]]


class AgentCritic(ValueCritic):
    """V^a(z^a_t): a shared head on one agent's observation and its id"""

    def __init__(self, agent_feature_size, n_agents, **kwargs):
        self.n_agents = n_agents
        super().__init__(agent_feature_size + n_agents, **kwargs)

    def features(self, observation, agent):
        """Observation features followed by the agent id one-hot"""
        one_hot = np.zeros(self.n_agents)
        one_hot[agent] = 1.0
        return np.concatenate([observation, one_hot])

    def sequences(self, episode):
        """One stream per agent, each with that agent's inputs at every step"""
        return [
            [self.features(t.inputs.agent(a), a) for t in episode.transitions]
            for a in range(self.n_agents)
        ]
