"""Correlated sampling from (possibly different) categorical distributions.

Two agents holding slightly different beliefs about a group policy want to
draw the same action as often as possible. Both samplers here only use
randomness both agents share:

* heuristic_sample: inverse CDF at a shared uniform draw.
* holenstein_sample: first point of a shared random permutation of
  actions x probability grid that falls under the caller's distribution.
  Disagreement is at most 2d/(1+d) for total variation distance d.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from mackrl.errors import DegenerateResolutionError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = Fraction(1, 1024)


def as_distribution(probabilities, atol=1e-9):
    """Validate a categorical distribution and return it as a float array"""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DomainError(f"Distribution must be a non-empty vector, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise DomainError("Distribution has negative or non-finite entries")
    if abs(p.sum() - 1.0) > atol:
        raise DomainError(f"Distribution sums to {p.sum():.12f}, expected 1")
    return p


def heuristic_sample(dist, shared_uniform):
    """Index u with sum(p[:u]) <= delta < sum(p[:u+1])"""
    p = as_distribution(dist)
    if not 0.0 <= shared_uniform < 1.0:
        raise DomainError(f"Shared uniform must lie in [0, 1), got {shared_uniform}")
    cdf = np.cumsum(p)
    index = int(np.searchsorted(cdf, shared_uniform, side="right"))
    # cdf[-1] can fall a rounding error short of 1
    return min(index, p.size - 1)


@dataclass(frozen=True)
class HolensteinConfig:
    gamma: Fraction = DEFAULT_GAMMA
    node_id: str = "holenstein"

    def __post_init__(self):
        gamma = Fraction(self.gamma).limit_denominator(1 << 20)
        if gamma <= 0 or gamma > 1 or gamma.numerator != 1:
            raise DomainError(f"gamma must be 1/m for a positive integer m, got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)

    @property
    def grid_steps(self):
        """m such that Gamma = {0, 1/m, ..., 1}"""
        return self.gamma.denominator

    def n_points(self, n_actions):
        return n_actions * (self.grid_steps + 1)


def holenstein_choice(dist, order, grid_steps):
    """Action of the first point of ``order`` (indices into U x Gamma) under ``dist``"""
    p = np.asarray(dist, dtype=np.float64)
    actions, levels = np.divmod(order, grid_steps + 1)
    # (u, j/m) is in H_a  <=>  j < p[u] * m
    accepted = levels < p[actions] * grid_steps
    if not accepted.any():
        raise DegenerateResolutionError(
            f"No grid point of resolution 1/{grid_steps} lies under the distribution"
        )
    return int(actions[int(np.argmax(accepted))])


def holenstein_sample(dist, config, seed):
    """Sample with Holenstein's strategy using the permutation seeded by ``seed``

    ``seed`` is the SharedSeed of the current timestep; every agent that holds
    it builds the same permutation of U x Gamma.
    """
    p = as_distribution(dist)
    order = seed.stream(config.node_id).permutation(config.n_points(p.size))
    return holenstein_choice(p, order, config.grid_steps)


def holenstein_marginal(dist, config):
    """Exact marginal of holenstein_sample, including the grid quantisation"""
    p = np.asarray(dist, dtype=np.float64)
    m = config.grid_steps
    counts = np.ceil(p * m - 1e-12).clip(min=0)
    if counts.sum() == 0:
        raise DegenerateResolutionError(f"Grid 1/{m} leaves the acceptance set empty")
    return counts / counts.sum()


def total_variation(dist_a, dist_b):
    """Total variation distance between two distributions on the same support"""
    p = as_distribution(dist_a)
    q = as_distribution(dist_b)
    if p.shape != q.shape:
        raise DomainError(f"Support mismatch: {p.shape} vs {q.shape}")
    return float(0.5 * np.abs(p - q).sum())


def holenstein_bound(tv_distance, grid_steps=None, n_actions=0):
    """Disagreement bound 2d/(1+d); with a grid, the bound for 1/m quantisation"""
    if grid_steps is None:
        return 2.0 * tv_distance / (1.0 + tv_distance)
    m = grid_steps
    return 1.0 - m * (1.0 - tv_distance) / (m * (1.0 + tv_distance) + n_actions)


class CorrelatedSampler:
    """Sampler used by the policy tree at every node

    ``kind`` is ``"heuristic"`` (inverse CDF, the default) or ``"holenstein"``.
    """

    KINDS = ("heuristic", "holenstein")

    def __init__(self, kind="heuristic", gamma=DEFAULT_GAMMA):
        if kind not in self.KINDS:
            raise DomainError(f"Unknown correlated sampler: {kind}")
        self.kind = kind
        self.gamma = Fraction(gamma).limit_denominator(1 << 20)

    def sample(self, probs, seed, node_id):
        """Draw from ``probs`` with the shared randomness of ``node_id``"""
        if self.kind == "heuristic":
            return heuristic_sample(probs, seed.uniform(node_id))
        return holenstein_sample(probs, HolensteinConfig(self.gamma, node_id), seed)

    def __repr__(self):
        return f"CorrelatedSampler(kind={self.kind!r}, gamma={self.gamma})"
