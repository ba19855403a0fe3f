"""Mutual and common knowledge of agent groups over entity-based states.

A state is a set of entities with feature vectors. Agent ``a`` sees entity
``e`` when its visibility mask says so; masks depend only on the two feature
vectors and are commonly known. With those assumptions the common knowledge
of a group is its mutual knowledge if every member sees every other member,
and empty otherwise. ``common_knowledge_recursive`` computes the same set by
iterating the "I know that you know" recursion and is kept as a check on the
closed form.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from mackrl.errors import DomainError

logger = logging.getLogger(__name__)

AGENT = "agent"
NON_AGENT = "non-agent"


@dataclass(frozen=True)
class EntityState:
    id: object
    features: np.ndarray
    kind: str = NON_AGENT

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        if self.kind not in (AGENT, NON_AGENT):
            raise DomainError(f"Entity kind must be '{AGENT}' or '{NON_AGENT}', got {self.kind}")

    @property
    def is_agent(self):
        return self.kind == AGENT


class WorldState:
    """The state s: entity records keyed by id, in insertion order"""

    def __init__(self, entities):
        self.entities = {}
        width = None
        for entity in entities:
            if entity.id in self.entities:
                raise DomainError(f"Duplicate entity id: {entity.id}")
            if width is None:
                width = entity.features.shape
            elif entity.features.shape != width:
                raise DomainError(
                    f"Entity {entity.id} has features of shape {entity.features.shape}, expected {width}"
                )
            self.entities[entity.id] = entity

    def __contains__(self, entity_id):
        return entity_id in self.entities

    def __iter__(self):
        return iter(self.entities.values())

    def __len__(self):
        return len(self.entities)

    def ids(self):
        return list(self.entities)

    def agent_ids(self):
        return [e.id for e in self.entities.values() if e.is_agent]

    def features(self, entity_id):
        return self.entities[entity_id].features

    def agent(self, agent_id):
        """The agent's entity record; DomainError for unknown or non-agent ids"""
        entity = self.entities.get(agent_id)
        if entity is None or not entity.is_agent:
            raise DomainError(f"Unknown agent id: {agent_id}")
        return entity

    def restricted(self, entity_ids):
        """Sub-state holding only the listed entities, in the original order"""
        keep = set(entity_ids)
        return WorldState([e for e in self.entities.values() if e.id in keep])


class VisibilityMask:
    """mu(s^a, s^e) -> bool, a pure function of the two feature vectors"""

    def __call__(self, observer_features, target_features):
        raise NotImplementedError


class CircularMask(VisibilityMask):
    """Sees everything within a commonly known Euclidean radius"""

    def __init__(self, radius, position=(0, 1)):
        self.radius = float(radius)
        self.position = list(position)

    def __call__(self, observer_features, target_features):
        delta = observer_features[self.position] - target_features[self.position]
        return bool(np.dot(delta, delta) <= self.radius * self.radius)

    def __repr__(self):
        return f"CircularMask(radius={self.radius})"


class TabularMask(VisibilityMask):
    """Explicit boolean table indexed by an integer key feature

    Row ``i`` says what the entity whose key is ``i`` sees. The diagonal is
    forced to True so every agent sees itself.
    """

    def __init__(self, table, key_index=0):
        table = np.array(table, dtype=bool)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise DomainError(f"Mask table must be square, got shape {table.shape}")
        np.fill_diagonal(table, True)
        self.table = table
        self.key_index = key_index

    def __call__(self, observer_features, target_features):
        return bool(self.table[int(observer_features[self.key_index]), int(target_features[self.key_index])])


@dataclass(frozen=True)
class CommonKnowledgeSet:
    group: frozenset
    entities: frozenset
    observation: tuple = field(default=())

    @property
    def is_empty(self):
        return not self.entities


@dataclass(frozen=True)
class BeliefSet:
    owner: object
    group: frozenset
    entities: frozenset
    observation: tuple = field(default=())

    @property
    def is_empty(self):
        return not self.entities


@dataclass(frozen=True)
class Observation:
    """What one agent sees: z^a = {s^e | e in M^a}, possibly corrupted"""

    owner: object
    entities: tuple

    def as_world(self):
        return WorldState(self.entities)

    def ids(self):
        return [e.id for e in self.entities]


def _sees(state, observer_id, target_id, mask):
    return mask(state.features(observer_id), state.features(target_id))


def _check_group(state, group):
    group = frozenset(group)
    if not group:
        raise DomainError("Group must be non-empty")
    for member in group:
        state.agent(member)
    return group


def visible_set(state, agent, mask):
    """M^a: every entity the agent's mask admits (always includes the agent)"""
    observer = state.agent(agent)
    seen = {e.id for e in state if mask(observer.features, e.features)}
    seen.add(agent)
    return frozenset(seen)


def observe(state, agent, mask):
    """z^a = o(s, a)"""
    return Observation(agent, tuple(state.restricted(visible_set(state, agent, mask))))


def mutual_knowledge(state, group, mask):
    """M^G: intersection of the members' visible sets"""
    group = _check_group(state, group)
    sets = [visible_set(state, a, mask) for a in sorted(group, key=repr)]
    return frozenset.intersection(*sets)


def _all_see_each_other(state, group, mask):
    return all(a == b or _sees(state, a, b, mask) for a in group for b in group)


def common_knowledge_closed_form(state, group, mask):
    """I^G = M^G if all members see each other, otherwise the empty set"""
    group = _check_group(state, group)
    if _all_see_each_other(state, group, mask):
        entities = mutual_knowledge(state, group, mask)
    else:
        entities = frozenset()
    return CommonKnowledgeSet(group, entities, tuple(state.restricted(entities)))


def common_knowledge_recursive(state, group, mask, start_agent, iterations):
    """I^a_m after ``iterations`` steps of the knowledge recursion

    I^a_0 = M^a and I^a_m = intersection over b in G of
    {e in I^b_{m-1} | a sees b}.
    """
    group = _check_group(state, group)
    if start_agent not in group:
        raise DomainError(f"Start agent {start_agent} is not in group {sorted(group, key=repr)}")
    if iterations < 0:
        raise DomainError(f"iterations must be >= 0, got {iterations}")
    members = sorted(group, key=repr)
    knowledge = {a: visible_set(state, a, mask) for a in members}
    for _ in range(iterations):
        updated = {}
        for a in members:
            result = None
            for b in members:
                term = knowledge[b] if _sees(state, a, b, mask) or a == b else frozenset()
                result = term if result is None else result & term
            updated[a] = result
        knowledge = updated
    return knowledge[start_agent]


def stationary_iterations(group):
    """Iteration count past which the recursion is a fixed point"""
    return len(group) + 3


def belief_common_knowledge(own_observation, group, mask):
    """The owner's belief I~^G_a: the closed form on its own (noisy) view

    A member the owner does not observe cannot be known to see the owner, so
    the belief is empty in that case.
    """
    group = frozenset(group)
    world = own_observation.as_world()
    if any(member not in world for member in group):
        return BeliefSet(own_observation.owner, group, frozenset(), ())
    ck = common_knowledge_closed_form(world, group, mask)
    return BeliefSet(own_observation.owner, group, ck.entities, ck.observation)


def encode_entities(entities, slots, feature_size, feature_fn=None):
    """One block per entity slot: presence flag, then features (zeros when absent)"""
    by_id = {e.id: e for e in entities}
    block = 1 + feature_size
    out = np.zeros(len(slots) * block)
    for i, slot in enumerate(slots):
        entity = by_id.get(slot)
        if entity is None:
            continue
        out[i * block] = 1.0
        features = entity.features if feature_fn is None else feature_fn(entity)
        out[i * block + 1:(i + 1) * block] = features
    return out


def encode_knowledge(knowledge, slots, feature_size, feature_fn=None):
    """Fixed-length controller input for a CommonKnowledgeSet or BeliefSet

    A trailing flag is 1 when the set is empty, so an empty common knowledge
    set still has a distinct encoding.
    """
    body = encode_entities(knowledge.observation, slots, feature_size, feature_fn)
    return np.append(body, 1.0 if knowledge.is_empty else 0.0)


def encoding_size(n_slots, feature_size):
    return n_slots * (1 + feature_size) + 1
