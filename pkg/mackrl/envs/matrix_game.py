"""Two-agent single-step matrix game with a common knowledge bit.

A fair coin picks payoff matrix A or B. With probability ``p_ck`` the common
knowledge bit is set and both agents learn the game. Otherwise each agent
independently observes the game with probability ``p_sigma`` and nothing
otherwise. ``p_sigma`` is derived so that every agent observes the game 75%
of the time overall. With ``flip_p > 0`` each agent's reading of the bit is
flipped independently, so the agents only hold beliefs about what is
commonly known.

Actions are 0-based: action 0 is the first row (agent 0) / column (agent 1).
"""

import logging
from dataclasses import dataclass
from itertools import product

import numpy as np

from mackrl.core.common_knowledge import (
    AGENT,
    NON_AGENT,
    EntityState,
    Observation,
    VisibilityMask,
    belief_common_knowledge,
    encode_knowledge,
    encoding_size,
)
from mackrl.envs.base import Environment
from mackrl.errors import DomainError

logger = logging.getLogger(__name__)

GAME_A = 0
GAME_B = 1
OBSERVATION_RATE = 0.75
N_ACTIONS = 5

PAYOFF_A = np.array([
    [5, 0, 0, 2, 0],
    [0, 1, 2, 4, 2],
    [0, 0, 0, 2, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 5],
])
PAYOFF_B = np.array([
    [0, 0, 1, 0, 5],
    [0, 0, 2, 0, 0],
    [1, 2, 4, 2, 1],
    [0, 0, 2, 0, 0],
    [5, 0, 1, 0, 0],
])
MATRICES = np.stack([PAYOFF_A, PAYOFF_B]) / 5.0

GAME_ENTITY = "game"
GAME_KEY = 2


@dataclass(frozen=True)
class MatrixGameConfig:
    p_ck: float = 0.5
    flip_p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_ck <= OBSERVATION_RATE:
            raise DomainError(f"p_ck must lie in [0, {OBSERVATION_RATE}], got {self.p_ck}")
        if not 0.0 <= self.flip_p <= 1.0:
            raise DomainError(f"flip_p must lie in [0, 1], got {self.flip_p}")

    @classmethod
    def from_ck_fraction(cls, ck_fraction, flip_p=0.0):
        """ck_fraction: share of observed games that come from a set CK bit"""
        if not 0.0 <= ck_fraction <= 1.0:
            raise DomainError(f"CK fraction must lie in [0, 1], got {ck_fraction}")
        return cls(p_ck=OBSERVATION_RATE * ck_fraction, flip_p=flip_p)

    @property
    def ck_fraction(self):
        return self.p_ck / OBSERVATION_RATE

    @property
    def p_sigma(self):
        """Solves p_ck + (1 - p_ck) * p_sigma = 0.75"""
        if self.p_ck >= 1.0:
            return 0.0
        return max(0.0, (OBSERVATION_RATE - self.p_ck) / (1.0 - self.p_ck))

    @property
    def matrices(self):
        return MATRICES


@dataclass(frozen=True)
class MatrixObservation:
    ck_bit: bool
    private_game: object = None


@dataclass(frozen=True)
class MatrixState:
    game: int
    ck_bit: bool
    private: tuple
    observed_bits: tuple


def matrix_reset(config, rng):
    """Draw a game; returns (state, per-agent observations)

    The private channel of both agents carries the game whenever the true bit
    is set. A flipped bit changes only what the agent reads.
    """
    game = GAME_B if rng.random() < 0.5 else GAME_A
    ck_bit = bool(rng.random() < config.p_ck)
    private_draws = rng.random(2)
    flips = rng.random(2) < config.flip_p
    if ck_bit:
        private = (game, game)
    else:
        private = tuple(game if draw < config.p_sigma else None for draw in private_draws)
    observed_bits = tuple(bool(ck_bit ^ flip) for flip in flips)
    state = MatrixState(game, ck_bit, private, observed_bits)
    observations = tuple(MatrixObservation(observed_bits[a], private[a]) for a in range(2))
    return state, observations


def payoff(game, joint_action):
    """Scaled payoff of a joint action in game 0 (A) or 1 (B)"""
    i, j = (int(u) for u in joint_action)
    if not (0 <= i < N_ACTIONS and 0 <= j < N_ACTIONS):
        raise DomainError(f"Joint action {joint_action} outside 0..{N_ACTIONS - 1}")
    return float(MATRICES[game][i, j])


def matrix_step(state, joint_action):
    """Single-step episode: the reward for the joint action"""
    return payoff(state.game, joint_action)


class CommonBitMask(VisibilityMask):
    """Entity features are [key, value]; an agent whose bit reads set sees everything"""

    def __call__(self, observer_features, target_features):
        return bool(observer_features[0] == target_features[0] or observer_features[1] == 1.0)


def agent_entity(agent, bit):
    return EntityState(agent, [agent, 1.0 if bit else 0.0], AGENT)


def observation_entities(agent, observation):
    """z^a as entities: the agent itself, plus the partner and the game when the bit reads set"""
    entities = [agent_entity(agent, observation.ck_bit)]
    if observation.ck_bit:
        entities.append(agent_entity(1 - agent, True))
        if observation.private_game is not None:
            entities.append(EntityState(GAME_ENTITY, [GAME_KEY, observation.private_game], NON_AGENT))
    return Observation(agent, tuple(entities))


def matrix_belief(agent, observation, group=(0, 1)):
    """Belief about the pair's common knowledge built from the agent's own observation"""
    return belief_common_knowledge(observation_entities(agent, observation), group, CommonBitMask())


def _game_one_hot(game):
    out = np.zeros(3)
    out[2 if game is None else game] = 1.0
    return out


class MatrixGameEnv(Environment):
    name = "matrix"
    n_agents = 2
    n_actions = N_ACTIONS
    slots = (0, 1, GAME_ENTITY)
    group_feature_size = encoding_size(3, 2)
    agent_feature_size = 3
    state_feature_size = 11

    def __init__(self, config=None):
        super().__init__()
        self.config = config or MatrixGameConfig()
        self.state = None
        self.observations = None
        if self.config.flip_p > 0:
            logger.debug(
                "Flipped CK bit: a bit that reads set carries the agent's private channel, "
                "which holds the true game only when the true bit was set"
            )

    @property
    def joint_feature_size(self):
        return 8

    def reset(self, rng):
        self.rng = rng
        self.state, self.observations = matrix_reset(self.config, rng)
        self.t = 0
        self.done = False
        return self.observations

    def step(self, joint_action):
        if self.done:
            raise DomainError("Episode already finished; call reset()")
        reward = matrix_step(self.state, joint_action)
        self.t += 1
        self.done = True
        return reward, True

    def belief(self, viewer, group=(0, 1)):
        return matrix_belief(viewer, self.observations[viewer], group)

    def group_view(self, group, viewer):
        return encode_knowledge(self.belief(viewer, group), self.slots, 2)

    def agent_view(self, agent):
        return _game_one_hot(self.observations[agent].private_game)

    def joint_view(self):
        """Both agents' observations, used by the JAL controller"""
        parts = []
        for obs in self.observations:
            parts.append([1.0 if obs.ck_bit else 0.0])
            parts.append(_game_one_hot(obs.private_game))
        return np.concatenate(parts)

    def state_features(self):
        """Game, CK bit, private channels and observed bits"""
        s = self.state
        game = np.zeros(2)
        game[s.game] = 1.0
        return np.concatenate([
            game,
            [1.0 if s.ck_bit else 0.0],
            _game_one_hot(s.private[0]),
            _game_one_hot(s.private[1]),
            [1.0 if b else 0.0 for b in s.observed_bits],
        ])

    def ck_richness(self, group, viewer):
        return sum(1 for e in self.belief(viewer, group).observation if e.kind == NON_AGENT)

    def describe(self):
        info = super().describe()
        info.update({"p_ck": self.config.p_ck, "p_sigma": self.config.p_sigma, "flip_p": self.config.flip_p})
        return info


def observation_outcomes(config):
    """Every (probability, game, bit, sigma_0, sigma_1) leaf of the probability tree"""
    outcomes = []
    for game in (GAME_A, GAME_B):
        if config.p_ck > 0:
            outcomes.append((0.5 * config.p_ck, game, True, game, game))
        no_ck = 0.5 * (1.0 - config.p_ck)
        for seen_0, seen_1 in product((True, False), repeat=2):
            prob = no_ck
            prob *= config.p_sigma if seen_0 else 1.0 - config.p_sigma
            prob *= config.p_sigma if seen_1 else 1.0 - config.p_sigma
            if prob > 0:
                outcomes.append((prob, game, False, game if seen_0 else None, game if seen_1 else None))
    return outcomes


def _best_joint_value(outcomes):
    """max over joint actions of the summed weighted payoff of a set of outcomes"""
    if not outcomes:
        return 0.0
    table = sum(prob * MATRICES[game] for prob, game, *_ in outcomes)
    return float(table.max())


def _grouped_value(outcomes, key):
    groups = {}
    for outcome in outcomes:
        groups.setdefault(key(outcome), []).append(outcome)
    return sum(_best_joint_value(members) for members in groups.values()), groups


def _observation_index(sigma):
    return 2 if sigma is None else sigma


def _independent_value_tables(outcomes):
    """(125, 125) expected payoff of every pair of deterministic maps {A, B, none} -> action"""
    maps = np.array(list(product(range(N_ACTIONS), repeat=3)))
    total = np.zeros((len(maps), len(maps)))
    for prob, game, _, sigma_0, sigma_1 in outcomes:
        rows = maps[:, _observation_index(sigma_0)]
        cols = maps[:, _observation_index(sigma_1)]
        total += prob * MATRICES[game][np.ix_(rows, cols)]
    return total


def matrix_oracle(config):
    """Exact optimal expected return of IAC, CK-JAL, JAL and MACKRL

    Exhaustive over deterministic policies of each class. Joint-action
    classes decompose per conditioning observation, so their search is done
    one observation at a time.
    """
    if config.flip_p != 0:
        raise DomainError("The oracle assumes noiseless common knowledge (flip_p = 0)")
    outcomes = observation_outcomes(config)

    def ck_state(outcome):
        _, game, bit, _, _ = outcome
        return ("ck", game) if bit else ("no-ck",)

    jal, _ = _grouped_value(outcomes, lambda o: (o[2], o[3], o[4]))
    ck_jal, ck_groups = _grouped_value(outcomes, ck_state)
    iac = float(_independent_value_tables(outcomes).max())

    mackrl_total = None
    for members in ck_groups.values():
        joint = _best_joint_value(members)
        delegate = _independent_value_tables(members)
        best = np.maximum(delegate, joint)
        mackrl_total = best if mackrl_total is None else mackrl_total + best
    mackrl = float(mackrl_total.max())

    result = {"IAC": iac, "CK-JAL": ck_jal, "JAL": jal, "MACKRL": mackrl}
    logger.debug(f"Matrix oracle at p_ck={config.p_ck:.4f}: {result}")
    return result
