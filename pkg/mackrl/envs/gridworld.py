"""Field-of-view predator/prey gridworld.

Agents and prey are entities with features ``[x, y, type]``. Every agent sees
the entities inside a commonly known circular radius, so the common
knowledge of a group follows from the closed form in
``mackrl.core.common_knowledge``. A prey is captured only when at least two
agents next to it choose ``capture`` in the same step.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from mackrl.core.common_knowledge import (
    AGENT,
    NON_AGENT,
    CircularMask,
    EntityState,
    WorldState,
    belief_common_knowledge,
    encode_entities,
    encode_knowledge,
    encoding_size,
    observe,
)
from mackrl.envs.base import Environment
from mackrl.errors import DomainError

logger = logging.getLogger(__name__)

STAY, UP, DOWN, LEFT, RIGHT, CAPTURE = range(6)
ACTION_NAMES = ("stay", "up", "down", "left", "right", "capture")
MOVES = {
    STAY: (0, 0),
    UP: (0, 1),
    DOWN: (0, -1),
    LEFT: (-1, 0),
    RIGHT: (1, 0),
    CAPTURE: (0, 0),
}
AGENT_TYPE = 0.0
PREY_TYPE = 1.0
CAPTURERS_NEEDED = 2


@dataclass(frozen=True)
class GridWorldConfig:
    size: int = 8
    n_agents: int = 4
    n_prey: int = 2
    radius: float = 2.5
    horizon: int = 40
    capture_reward: float = 1.0
    step_penalty: float = -0.01
    prey_move_prob: float = 0.2

    def __post_init__(self):
        if self.size < 2:
            raise DomainError(f"Grid size must be >= 2, got {self.size}")
        if self.n_agents < 2:
            raise DomainError(f"Need at least two agents, got {self.n_agents}")
        if self.n_prey < 1:
            raise DomainError(f"Need at least one prey, got {self.n_prey}")
        if self.n_agents + self.n_prey > self.size * self.size:
            raise DomainError("More entities than grid cells")
        if self.radius < 0:
            raise DomainError(f"radius must be >= 0, got {self.radius}")
        if self.horizon < 1:
            raise DomainError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 <= self.prey_move_prob <= 1.0:
            raise DomainError(f"prey_move_prob must lie in [0, 1], got {self.prey_move_prob}")


def prey_id(k):
    return f"prey{k}"


@dataclass
class GridState:
    agents: np.ndarray
    prey: np.ndarray
    alive: np.ndarray
    t: int = 0
    captures: list = field(default_factory=list)

    def world(self):
        entities = [EntityState(a, [x, y, AGENT_TYPE], AGENT) for a, (x, y) in enumerate(self.agents)]
        for k, (x, y) in enumerate(self.prey):
            if self.alive[k]:
                entities.append(EntityState(prey_id(k), [x, y, PREY_TYPE], NON_AGENT))
        return WorldState(entities)


def grid_reset(config, rng):
    """Distinct random cells for every agent and prey"""
    cells = rng.choice(config.size * config.size, config.n_agents + config.n_prey, replace=False)
    xy = np.stack(np.divmod(cells, config.size), axis=1)
    return GridState(
        agents=xy[:config.n_agents].copy(),
        prey=xy[config.n_agents:].copy(),
        alive=np.ones(config.n_prey, dtype=bool),
    )


def _check_actions(config, joint_action):
    if len(joint_action) != config.n_agents:
        raise DomainError(f"Expected {config.n_agents} actions, got {len(joint_action)}")
    actions = []
    for u in joint_action:
        if not 0 <= int(u) < len(ACTION_NAMES):
            raise DomainError(f"Invalid action id {u}, expected 0..{len(ACTION_NAMES) - 1}")
        actions.append(int(u))
    return actions


def grid_step(config, state, joint_action, rng):
    """Apply one joint action; returns (next state, reward, done)

    Captures are resolved on the pre-move positions, then agents move, then
    the surviving prey wander.
    """
    actions = _check_actions(config, joint_action)
    agents = state.agents.copy()
    prey = state.prey.copy()
    alive = state.alive.copy()
    reward = config.step_penalty
    captures = []

    capturing = [a for a, u in enumerate(actions) if u == CAPTURE]
    for k in np.flatnonzero(alive):
        adjacent = [a for a in capturing if np.abs(agents[a] - prey[k]).sum() <= 1]
        if len(adjacent) >= CAPTURERS_NEEDED:
            alive[k] = False
            reward += config.capture_reward
            captures.append((int(k), tuple(adjacent)))

    for a, u in enumerate(actions):
        agents[a] = np.clip(agents[a] + MOVES[u], 0, config.size - 1)

    # fixed draw count per step keeps the env stream aligned across policies
    wander = rng.random(config.n_prey) < config.prey_move_prob
    directions = rng.integers(1, 5, size=config.n_prey)
    for k in np.flatnonzero(alive & wander):
        prey[k] = np.clip(prey[k] + MOVES[int(directions[k])], 0, config.size - 1)

    t = state.t + 1
    done = t >= config.horizon or not alive.any()
    return GridState(agents, prey, alive, t, captures), float(reward), bool(done)


class GridWorldEnv(Environment):
    name = "gridworld"

    def __init__(self, config=None):
        super().__init__()
        self.config = config or GridWorldConfig()
        self.n_agents = self.config.n_agents
        self.n_actions = len(ACTION_NAMES)
        self.mask = CircularMask(self.config.radius)
        self.slots = tuple(range(self.n_agents)) + tuple(prey_id(k) for k in range(self.config.n_prey))
        self.group_feature_size = encoding_size(len(self.slots), 3)
        self.agent_feature_size = len(self.slots) * 4
        self.state_feature_size = len(self.slots) * 4 + 1
        self.state = None
        self._world = None
        self._observations = {}

    def _scale(self, entity):
        x, y, kind = entity.features
        scale = max(self.config.size - 1, 1)
        return np.array([x / scale, y / scale, kind])

    def _refresh(self):
        self._world = self.state.world()
        self._observations = {a: observe(self._world, a, self.mask) for a in range(self.n_agents)}

    def reset(self, rng):
        self.rng = rng
        self.state = grid_reset(self.config, rng)
        self.t = 0
        self.done = False
        self._refresh()
        return self._observations

    def step(self, joint_action):
        if self.done:
            raise DomainError("Episode already finished; call reset()")
        self.state, reward, self.done = grid_step(self.config, self.state, joint_action, self.rng)
        self.t = self.state.t
        for k, agents in self.state.captures:
            logger.debug(f"Prey {k} captured by agents {agents} at t={self.t}")
        self._refresh()
        return reward, self.done

    def observation(self, agent):
        """Entities within the agent's sight radius"""
        return self._observations[agent]

    def belief(self, viewer, group):
        """The viewer's belief about the group's common knowledge"""
        return belief_common_knowledge(self._observations[viewer], group, self.mask)

    def group_view(self, group, viewer):
        return encode_knowledge(self.belief(viewer, group), self.slots, 3, self._scale)

    def agent_view(self, agent):
        return encode_entities(self._observations[agent].entities, self.slots, 3, self._scale)

    def state_features(self):
        """Flat full-state vector for the central critic"""
        body = encode_entities(list(self._world), self.slots, 3, self._scale)
        return np.append(body, self.t / self.config.horizon)

    def world_state(self):
        return self._world

    def ck_richness(self, group, viewer):
        """Number of prey in the group's common knowledge"""
        return sum(1 for e in self.belief(viewer, group).observation if e.kind == NON_AGENT)

    def describe(self):
        info = super().describe()
        info.update({
            "size": self.config.size,
            "n_prey": self.config.n_prey,
            "radius": self.config.radius,
            "horizon": self.config.horizon,
        })
        return info
