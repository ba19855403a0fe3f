"""Partitions of agents into pairs (plus one singleton for odd counts)."""

import logging
from math import factorial

import numpy as np

from mackrl.errors import DomainError

logger = logging.getLogger(__name__)


def all_pairings(items):
    """Yield every perfect matching of ``items`` in lexicographic order"""
    items = list(items)
    if not items:
        yield []
        return
    first = items[0]
    rest = items[1:]
    for i, item in enumerate(rest):
        for pairing in all_pairings(rest[:i] + rest[i + 1:]):
            yield [(first, item)] + pairing


def enumerate_pair_partitions(n):
    """All pairwise partitions of agents 0..n-1

    Canonical order: for odd n the singleton agent ascending, then the pairs
    lexicographically. Each partition is a tuple of sorted groups with the
    singleton (if any) first.
    """
    if n < 2:
        raise DomainError(f"Pairwise partitions need at least 2 agents, got {n}")
    agents = list(range(n))
    partitions = []
    if n % 2 == 0:
        for pairing in all_pairings(agents):
            partitions.append(tuple(pairing))
    else:
        for single in agents:
            others = [a for a in agents if a != single]
            for pairing in all_pairings(others):
                partitions.append(((single,),) + tuple(pairing))
    return partitions


def count_pair_partitions(n):
    """n! / (2^k k!) with k = floor(n/2)"""
    if n < 2:
        raise DomainError(f"Pairwise partitions need at least 2 agents, got {n}")
    k = n // 2
    return factorial(n) // (2 ** k * factorial(k))


def subsample_partitions(partitions, k, seed):
    """A fixed uniform subset of size k (without replacement), kept in canonical order"""
    if not 1 <= k <= len(partitions):
        raise DomainError(f"Subsample size must lie in [1, {len(partitions)}], got {k}")
    if k == len(partitions):
        return list(partitions)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), len(partitions), k]))
    chosen = np.sort(rng.choice(len(partitions), size=k, replace=False))
    return [partitions[i] for i in chosen]


def all_pairs(n):
    """Unordered agent pairs in lexicographic order"""
    return [(a, b) for a in range(n) for b in range(a + 1, n)]


def independent_partition(n):
    """{{0}, {1}, ..., {n-1}}: the fully decentralised root action"""
    return tuple((a,) for a in range(n))


def group_of(partition, agent):
    """The group of ``partition`` that contains ``agent``"""
    for group in partition:
        if agent in group:
            return group
    raise DomainError(f"Agent {agent} is not covered by partition {partition}")


def validate_partition(partition, n):
    """Raise DomainError unless ``partition`` covers agents 0..n-1 exactly once"""
    covered = [a for group in partition for a in group]
    if sorted(covered) != list(range(n)):
        raise DomainError(f"Partition {partition} does not cover agents 0..{n - 1} exactly once")
    return partition
