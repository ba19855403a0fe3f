"""Pairwise MACKRL policy tree.

Three levels of controllers:

* the pair selector picks a partition of the agents into pairs (one agent
  stays alone when the count is odd),
* the pair controller of a selected pair picks a joint action for the pair or
  delegates,
* individual controllers pick one agent's action.

``select_action`` is what one agent runs at execution time: it walks down the
tree from the root, conditioning each group controller on its own view of the
group's common knowledge and drawing every random choice from the shared
seed, so all agents reach the same joint action without communicating.
``joint_policy`` marginalises the tree to the probability of a joint action
and ``log_joint_policy_grad`` differentiates that marginal for training.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from mackrl.core.approximator import bounded_softmax, greedy_action, make_head, softmax_cotangent
from mackrl.core.correlated_sampling import CorrelatedSampler
from mackrl.core.partitions import all_pairs, enumerate_pair_partitions, independent_partition, validate_partition
from mackrl.errors import DomainError, StructuralError, ZeroProbabilityError

logger = logging.getLogger(__name__)

PAIR_SELECTOR = "pair_selector"
PAIR_CONTROLLER = "pair_controller"
INDIVIDUAL = "individual"


@dataclass
class TreeInputs:
    """Everything the controllers condition on at one timestep

    ``group_features[(group, viewer)]`` is the encoding of ``viewer``'s view
    of the group's common knowledge (identical across viewers when there is
    no observation noise). ``agent_features[a]`` is agent a's own
    observation encoding. ``joint_features`` is the union of all
    observations, only used by centrally executed controllers.
    """

    group_features: dict
    agent_features: dict
    agent_hidden: dict = field(default_factory=dict)
    joint_features: np.ndarray = None

    @classmethod
    def shared(cls, group_features, agent_features, joint_features=None):
        """Noiseless inputs: every member of a group sees the same encoding"""
        per_viewer = {}
        for group, features in group_features.items():
            for viewer in group:
                per_viewer[(tuple(group), viewer)] = np.asarray(features, dtype=np.float64)
        return cls(per_viewer, {a: np.asarray(f, dtype=np.float64) for a, f in agent_features.items()},
                   joint_features=joint_features)

    def group(self, group, viewer):
        key = (tuple(group), viewer)
        if key not in self.group_features:
            raise StructuralError(f"No common knowledge encoding for group {group} seen by agent {viewer}")
        return self.group_features[key]

    def agent(self, agent):
        if agent not in self.agent_features:
            raise StructuralError(f"No observation encoding for agent {agent}")
        return self.agent_features[agent]


@dataclass(frozen=True)
class GroupAction:
    """Either a joint environmental action or a partition of the group"""

    env: tuple = None
    partition: tuple = None

    def __post_init__(self):
        if (self.env is None) == (self.partition is None):
            raise DomainError("A group action is exactly one of env or partition")

    @property
    def is_env(self):
        return self.env is not None


@dataclass
class PolicyNode:
    node_id: str
    kind: str
    group: tuple
    action_space: list
    head: object
    index: int = 0


class Controller:
    """Common interface of every actor the trainer can optimise"""

    n_agents = 0
    n_actions = 0

    def named_heads(self):
        raise NotImplementedError

    def parameter_size(self):
        return sum(head.layout.size for _, head in self.named_heads())

    def get_parameters(self):
        return np.concatenate([head.params for _, head in self.named_heads()])

    def set_parameters(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.parameter_size(),):
            raise DomainError(f"Expected {self.parameter_size()} parameters, got {flat.shape}")
        offset = 0
        for _, head in self.named_heads():
            size = head.layout.size
            head.params = flat[offset:offset + size].copy()
            offset += size

    def head_slices(self):
        slices = {}
        offset = 0
        for name, head in self.named_heads():
            slices[name] = slice(offset, offset + head.layout.size)
            offset += head.layout.size
        return slices

    def describe(self):
        return {name: head.describe() for name, head in self.named_heads()}

    def next_hidden(self, agent, inputs):
        return None

    def initial_hidden(self):
        return None


class PolicyTree(Controller):
    """Pair selector, shared pair-controller head, shared individual head"""

    def __init__(self, n_agents, n_actions, group_feature_size, agent_feature_size,
                 architecture="linear", hidden_size=16, partitions=None, independent=False,
                 sampler=None, rng=None, init_scale=1.0):
        if n_agents < 1:
            raise DomainError(f"Need at least one agent, got {n_agents}")
        if n_agents < 2 and not independent:
            raise DomainError("A pairwise tree needs at least two agents")
        self.n_agents = int(n_agents)
        self.n_actions = int(n_actions)
        self.group_feature_size = int(group_feature_size)
        self.agent_feature_size = int(agent_feature_size)
        self.architecture = architecture
        self.independent = bool(independent)
        self.sampler = sampler or CorrelatedSampler()
        self.root = tuple(range(self.n_agents))
        self.delegate_index = self.n_actions * self.n_actions

        if self.independent:
            self.partitions = [independent_partition(self.n_agents)]
        else:
            self.partitions = list(partitions) if partitions is not None else enumerate_pair_partitions(self.n_agents)
        for partition in self.partitions:
            validate_partition(partition, self.n_agents)

        self.pairs = all_pairs(self.n_agents)
        self.pair_index = {pair: i for i, pair in enumerate(self.pairs)}
        used_pairs = sorted({g for partition in self.partitions for g in partition if len(g) == 2})

        group_arch = "mlp" if architecture == "gru" else architecture
        rng = rng if rng is not None else np.random.default_rng(0)
        self.ps_head = make_head(group_arch, self.group_feature_size, len(self.partitions),
                                 hidden_size, rng, init_scale)
        self.pc_head = None
        if used_pairs:
            self.pc_head = make_head(group_arch, self.group_feature_size + len(self.pairs),
                                     self.delegate_index + 1, hidden_size, rng, init_scale)
        self.agent_head = make_head(architecture, self.agent_feature_size + self.n_agents,
                                    self.n_actions, hidden_size, rng, init_scale)

        self.nodes = {
            "ps": PolicyNode("ps", PAIR_SELECTOR, self.root,
                             [GroupAction(partition=p) for p in self.partitions], self.ps_head),
        }
        pair_actions = [GroupAction(env=(i, j)) for i in range(self.n_actions) for j in range(self.n_actions)]
        for pair in used_pairs:
            a, b = pair
            self.nodes[self.pc_node_id(pair)] = PolicyNode(
                self.pc_node_id(pair), PAIR_CONTROLLER, pair,
                pair_actions + [GroupAction(partition=((a,), (b,)))], self.pc_head, self.pair_index[pair],
            )
        for a in range(self.n_agents):
            self.nodes[self.agent_node_id(a)] = PolicyNode(
                self.agent_node_id(a), INDIVIDUAL, (a,),
                [GroupAction(env=(u,)) for u in range(self.n_actions)], self.agent_head, a,
            )
        logger.debug(
            f"Policy tree: {self.n_agents} agents, {len(self.partitions)} partitions, "
            f"{len(used_pairs)} pair controllers, {self.parameter_size()} parameters"
        )

    @staticmethod
    def pc_node_id(pair):
        return f"pc:{pair[0]}-{pair[1]}"

    @staticmethod
    def agent_node_id(agent):
        return f"agent:{agent}"

    def named_heads(self):
        heads = [("pair_selector", self.ps_head)]
        if self.pc_head is not None:
            heads.append(("pair_controller", self.pc_head))
        heads.append(("individual", self.agent_head))
        return heads

    def node(self, node_id):
        """The head that acts at ``node_id``"""
        if node_id not in self.nodes:
            raise StructuralError(f"Policy tree has no node '{node_id}'")
        return self.nodes[node_id]

    # -- controller inputs -------------------------------------------------

    def _one_hot(self, index, size):
        out = np.zeros(size)
        out[index] = 1.0
        return out

    def _ps_input(self, inputs, viewer):
        return inputs.group(self.root, viewer)

    def _pc_input(self, pair, inputs, viewer):
        self.node(self.pc_node_id(pair))
        return np.concatenate([inputs.group(pair, viewer), self._one_hot(self.pair_index[pair], len(self.pairs))])

    def _agent_input(self, agent, inputs):
        return np.concatenate([inputs.agent(agent), self._one_hot(agent, self.n_agents)])

    def _evaluate(self, head, x, hidden=None, epsilon=0.0):
        """(softmax, bounded softmax) of a head's logits"""
        logits, _ = head.forward(x, hidden)
        soft = bounded_softmax(logits, 0.0)
        return soft, bounded_softmax(logits, epsilon)

    def pair_selector_probs(self, inputs, viewer=0, epsilon=0.0):
        """Distribution over partitions from ``viewer``'s view of the root common knowledge"""
        return self._evaluate(self.ps_head, self._ps_input(inputs, viewer), epsilon=epsilon)[1]

    def pair_controller_probs(self, pair, inputs, viewer=None, epsilon=0.0):
        """Distribution over the pair's joint actions plus delegation"""
        pair = tuple(sorted(pair))
        viewer = pair[0] if viewer is None else viewer
        return self._evaluate(self.pc_head, self._pc_input(pair, inputs, viewer), epsilon=epsilon)[1]

    def individual_probs(self, agent, inputs, epsilon=0.0):
        """The agent's own action distribution"""
        return self._evaluate(self.agent_head, self._agent_input(agent, inputs),
                              inputs.agent_hidden.get(agent), epsilon)[1]

    def initial_hidden(self):
        return self.agent_head.initial_hidden() if self.agent_head.is_recurrent else None

    def next_hidden(self, agent, inputs):
        if not self.agent_head.is_recurrent:
            return None
        _, hidden = self.agent_head.forward(self._agent_input(agent, inputs), inputs.agent_hidden.get(agent))
        return hidden

    # -- decentralised execution --------------------------------------------

    def _choose(self, node_id, probs, seed, greedy):
        if greedy:
            return greedy_action(probs)
        return self.sampler.sample(probs, seed, node_id)

    def _decode_pair(self, index):
        return divmod(index, self.n_actions)

    def select_action(self, agent, inputs, seed, greedy=False, epsilon=0.0, trace=None):
        """Tree walk run by a single agent; returns that agent's action"""
        if not 0 <= agent < self.n_agents:
            raise DomainError(f"Unknown agent {agent}")
        choice = self._choose("ps", self.pair_selector_probs(inputs, agent, epsilon), seed, greedy)
        partition = self.partitions[choice]
        if trace is not None:
            trace["partition"] = choice
        group = next(g for g in partition if agent in g)
        if len(group) == 2:
            node_id = self.pc_node_id(group)
            probs = self.pair_controller_probs(group, inputs, agent, epsilon)
            pc_choice = self._choose(node_id, probs, seed, greedy)
            if trace is not None:
                trace.setdefault("pairs", {})[group] = pc_choice
            if pc_choice != self.delegate_index:
                return self._decode_pair(pc_choice)[group.index(agent)]
        elif len(group) != 1:
            raise StructuralError(f"Group {group} is neither a pair nor a singleton")
        node_id = self.agent_node_id(agent)
        return self._choose(node_id, self.individual_probs(agent, inputs, epsilon), seed, greedy)

    def sample_joint_action(self, inputs, seed, greedy=False, epsilon=0.0):
        """Central traversal of the tree; returns (joint action, trace)

        Each group controller is evaluated from its lowest member's view.
        """
        trace = {"pairs": {}}
        choice = self._choose("ps", self.pair_selector_probs(inputs, 0, epsilon), seed, greedy)
        trace["partition"] = choice
        actions = [None] * self.n_agents
        for group in self.partitions[choice]:
            if len(group) == 2:
                probs = self.pair_controller_probs(group, inputs, group[0], epsilon)
                pc_choice = self._choose(self.pc_node_id(group), probs, seed, greedy)
                trace["pairs"][group] = pc_choice
                if pc_choice != self.delegate_index:
                    actions[group[0]], actions[group[1]] = self._decode_pair(pc_choice)
                    continue
            for agent in group:
                actions[agent] = self._choose(self.agent_node_id(agent),
                                              self.individual_probs(agent, inputs, epsilon), seed, greedy)
        return tuple(actions), trace

    # -- marginalisation and its gradient ----------------------------------

    def _check_joint_action(self, joint_action, group):
        if len(joint_action) != len(group):
            raise DomainError(f"Joint action {joint_action} does not match group {group}")
        for u in joint_action:
            if not 0 <= int(u) < self.n_actions:
                raise DomainError(f"Action {u} outside the environmental action space 0..{self.n_actions - 1}")

    def _resolve_group(self, group):
        group = self.root if group is None else tuple(sorted(group))
        if group != self.root and len(group) > 2:
            raise DomainError(f"Group {group} is not a node of the pairwise tree")
        if len(group) == 2 and group != self.root:
            self.node(self.pc_node_id(group))
        return group

    def joint_policy(self, joint_action, inputs, group=None, epsilon=0.0):
        """Probability that the controller of ``group`` produces ``joint_action``

        ``joint_action`` lists one action per member of ``group`` (the root
        group by default), members in ascending order.
        """
        prob, _ = self._marginal(joint_action, inputs, group, epsilon, with_grad=False)
        return prob

    def log_joint_policy_grad(self, joint_action, inputs, group=None, epsilon=0.0):
        """Gradient of log joint_policy with respect to get_parameters()"""
        return self.log_joint_policy_and_grad(joint_action, inputs, group, epsilon)[1]

    def log_joint_policy_and_grad(self, joint_action, inputs, group=None, epsilon=0.0):
        """(log P(joint_action), its gradient) in one marginalisation pass"""
        prob, grad = self._marginal(joint_action, inputs, group, epsilon, with_grad=True)
        if prob <= 0.0:
            raise ZeroProbabilityError(f"Joint action {tuple(joint_action)} has probability zero")
        return float(np.log(prob)), grad / prob

    def _marginal(self, joint_action, inputs, group, epsilon, with_grad):
        group = self._resolve_group(group)
        self._check_joint_action(joint_action, group)
        u = {agent: int(a) for agent, a in zip(group, joint_action)}

        individual = {}
        for agent in group:
            x = self._agent_input(agent, inputs)
            hidden = inputs.agent_hidden.get(agent)
            soft, probs = self._evaluate(self.agent_head, x, hidden, epsilon)
            individual[agent] = (soft, probs, x, hidden)

        # every subgroup term is computed once and reused across partitions
        pair_terms = {}

        def pair_term(pair):
            if pair not in pair_terms:
                a, b = pair
                x = self._pc_input(pair, inputs, a)
                soft, probs = self._evaluate(self.pc_head, x, epsilon=epsilon)
                p_a = individual[a][1][u[a]]
                p_b = individual[b][1][u[b]]
                joint_index = u[a] * self.n_actions + u[b]
                value = probs[joint_index] + probs[self.delegate_index] * p_a * p_b
                pair_terms[pair] = (value, soft, probs, x, joint_index)
            return pair_terms[pair][0]

        def term(g):
            return pair_term(g) if len(g) == 2 else individual[g[0]][1][u[g[0]]]

        grads = np.zeros(self.parameter_size()) if with_grad else None
        slices = self.head_slices() if with_grad else None
        coefficient = {}

        if group == self.root:
            x_ps = self._ps_input(inputs, 0)
            soft_ps, probs_ps = self._evaluate(self.ps_head, x_ps, epsilon=epsilon)
            partition_values = np.array([np.prod([term(g) for g in p]) for p in self.partitions])
            prob = float(probs_ps @ partition_values)
            if with_grad:
                grads[slices["pair_selector"]] += self.ps_head.grad(
                    x_ps, softmax_cotangent(soft_ps, partition_values, epsilon))
                for k, partition in enumerate(self.partitions):
                    for i, g in enumerate(partition):
                        others = np.prod([term(h) for j, h in enumerate(partition) if j != i])
                        coefficient[g] = coefficient.get(g, 0.0) + probs_ps[k] * others
        else:
            prob = float(term(group))
            coefficient[group] = 1.0

        if not with_grad:
            return prob, None

        agent_weight = {agent: 0.0 for agent in group}
        for g, weight in coefficient.items():
            if len(g) == 1:
                agent_weight[g[0]] += weight
                continue
            a, b = g
            _, soft, probs, x, joint_index = pair_terms[g]
            p_a = individual[a][1][u[a]]
            p_b = individual[b][1][u[b]]
            w = np.zeros(probs.size)
            w[joint_index] = 1.0
            w[self.delegate_index] = p_a * p_b
            grads[slices["pair_controller"]] += self.pc_head.grad(x, weight * softmax_cotangent(soft, w, epsilon))
            agent_weight[a] += weight * probs[self.delegate_index] * p_b
            agent_weight[b] += weight * probs[self.delegate_index] * p_a

        for agent, weight in agent_weight.items():
            if weight == 0.0:
                continue
            soft, probs, x, hidden = individual[agent]
            w = np.zeros(probs.size)
            w[u[agent]] = 1.0
            grads[slices["individual"]] += self.agent_head.grad(
                x, weight * softmax_cotangent(soft, w, epsilon), hidden)
        return prob, grads

    def log_individual_policy_grad(self, agent, action, inputs, epsilon=0.0):
        """(log pi^a(u), gradient) for independent learners"""
        x = self._agent_input(agent, inputs)
        hidden = inputs.agent_hidden.get(agent)
        soft, probs = self._evaluate(self.agent_head, x, hidden, epsilon)
        if probs[action] <= 0.0:
            raise ZeroProbabilityError(f"Agent {agent} action {action} has probability zero")
        w = np.zeros(probs.size)
        w[action] = 1.0 / probs[action]
        grads = np.zeros(self.parameter_size())
        grads[self.head_slices()["individual"]] = self.agent_head.grad(x, softmax_cotangent(soft, w, epsilon), hidden)
        return float(np.log(probs[action])), grads


def build_policy_tree(n_agents, n_actions, group_feature_size, agent_feature_size, settings=None, rng=None):
    """Build a tree from a run-config style dict"""
    from mackrl.core.partitions import subsample_partitions

    settings = settings or {}
    independent = settings.get("independent", False)
    partitions = None
    if not independent and n_agents >= 2:
        partitions = enumerate_pair_partitions(n_agents)
        k = settings.get("partition_subsample")
        if k:
            partitions = subsample_partitions(partitions, int(k), settings.get("partition_seed", 0))
            logger.info(f"Pair selector restricted to {len(partitions)} partitions")
    sampler = CorrelatedSampler(settings.get("correlated_sampler", "heuristic"),
                                settings.get("holenstein_gamma", 1 / 1024))
    return PolicyTree(
        n_agents, n_actions, group_feature_size, agent_feature_size,
        architecture=settings.get("architecture", "linear"),
        hidden_size=settings.get("hidden_size", 16),
        partitions=partitions,
        independent=independent,
        sampler=sampler,
        rng=rng,
        init_scale=settings.get("init_scale", 1.0),
    )
