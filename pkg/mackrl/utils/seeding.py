"""Shared seeds and reproducible random streams.

Every random decision an agent takes while acting is drawn from a stream that
is a pure function of (episode seed, timestep, node id). The streams come from
numpy's Philox bit generator. Its 128-bit key is hashed by SeedSequence from
the episode seed, the timestep and a stable code of the node id, and its
counter starts at zero, so draws from different (timestep, node) pairs never
run into each other. Two agents that hold the same SharedSeed therefore draw
identical numbers for the same node no matter in which order they evaluate
the tree.
"""

import zlib
from dataclasses import dataclass, replace

import numpy as np

_MASK64 = (1 << 64) - 1


def node_code(node_id):
    """Stable 32-bit code for a node id (never Python's salted hash())"""
    return zlib.crc32(str(node_id).encode("utf-8")) & 0xFFFFFFFF


@dataclass(frozen=True)
class SharedSeed:
    """Commonly known randomness of one episode, positioned at timestep t"""

    episode_seed: int
    t: int = 0

    def at(self, t):
        return replace(self, t=int(t))

    def stream(self, node_id):
        """Independent generator for one (timestep, node) pair"""
        entropy = [self.episode_seed & _MASK64, self.t & _MASK64, node_code(node_id)]
        key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
        bit_generator = np.random.Philox(key=key)
        return np.random.Generator(bit_generator)

    def uniform(self, node_id):
        """The shared uniform draw in [0, 1) for a node"""
        return float(self.stream(node_id).random())


def derive_seed(*entropy):
    """Fold integers into one 63-bit seed via SeedSequence"""
    seq = np.random.SeedSequence([int(e) & _MASK64 for e in entropy])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def episode_seed(run_seed, episode_index):
    """SharedSeed of one episode of a run"""
    return SharedSeed(derive_seed(run_seed, 0x5EED, episode_index))


def make_rng(*entropy):
    """Private (non-shared) generator, e.g. for an environment worker"""
    return np.random.default_rng(np.random.SeedSequence([int(e) & _MASK64 for e in entropy]))
