"""Episode records collected for training."""

from dataclasses import dataclass, field

import numpy as np

from mackrl.errors import DomainError


@dataclass
class Transition:
    state: np.ndarray
    inputs: object
    joint_action: tuple
    reward: float
    seed: object
    prev_action: tuple = None
    delegations: list = field(default_factory=list)
    disagreements: int = 0
    world: object = None
    log_prob: float = None

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise DomainError(f"Non-finite reward {self.reward}")


@dataclass
class Episode:
    transitions: list = field(default_factory=list)
    index: int = 0

    def __len__(self):
        return len(self.transitions)

    @property
    def rewards(self):
        return np.array([t.reward for t in self.transitions])

    def returns(self, gamma=1.0):
        """R_t = sum_l gamma^l r_{t+l} for every step"""
        out = np.zeros(len(self.transitions))
        running = 0.0
        for t in range(len(self.transitions) - 1, -1, -1):
            running = self.transitions[t].reward + gamma * running
            out[t] = running
        return out

    @property
    def total_return(self):
        """Undiscounted return from the first step"""
        return float(self.returns(1.0)[0]) if self.transitions else 0.0


@dataclass
class EpisodeBatch:
    episodes: list = field(default_factory=list)
    epsilon: float = 0.0
    greedy: bool = False

    def __iter__(self):
        return iter(self.episodes)

    def __len__(self):
        return len(self.episodes)

    @property
    def env_steps(self):
        return sum(len(e) for e in self.episodes)

    def transitions(self):
        """Every transition of every episode, in episode order"""
        for episode in self.episodes:
            yield from episode.transitions

    @property
    def mean_return(self):
        if not self.episodes:
            return 0.0
        return float(np.mean([e.total_return for e in self.episodes]))

    def delegation_counts(self):
        """{bucket: (delegations, pair-controller decisions)}"""
        counts = {}
        for transition in self.transitions():
            for bucket, delegated in transition.delegations:
                done, total = counts.get(bucket, (0, 0))
                counts[bucket] = (done + int(delegated), total + 1)
        return counts

    @property
    def delegation_rate(self):
        """Share of pair-controller decisions that delegated, or None when there were none"""
        counts = self.delegation_counts()
        total = sum(n for _, n in counts.values())
        if total == 0:
            return None
        return sum(d for d, _ in counts.values()) / total

    @property
    def disagreement_rate(self):
        """Share of steps on which the agents' tree walks disagreed"""
        steps = self.env_steps
        if steps == 0:
            return 0.0
        return sum(1 for t in self.transitions() if t.disagreements) / steps
