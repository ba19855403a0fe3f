"""Property suites run by ``mackrl verify``.

Each suite returns a list of CheckResult; the CLI prints them and exits
nonzero when any check fails.
"""

import logging
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import stats

from mackrl.core.approximator import GRUHead, ValueHead
from mackrl.core.common_knowledge import (
    AGENT,
    NON_AGENT,
    CircularMask,
    EntityState,
    TabularMask,
    WorldState,
    common_knowledge_closed_form,
    common_knowledge_recursive,
    stationary_iterations,
)
from mackrl.core.correlated_sampling import (
    HolensteinConfig,
    heuristic_sample,
    holenstein_bound,
    holenstein_choice,
    holenstein_marginal,
    total_variation,
)
from mackrl.core.joint_action_policy import JointActionPolicy
from mackrl.core.partitions import all_pairs, count_pair_partitions, enumerate_pair_partitions
from mackrl.core.policy_tree import PolicyTree, TreeInputs
from mackrl.envs.gridworld import GridWorldConfig, GridWorldEnv
from mackrl.envs.matrix_game import (
    MATRICES,
    PAYOFF_A,
    PAYOFF_B,
    MatrixGameConfig,
    matrix_oracle,
    matrix_reset,
    payoff,
)
from mackrl.errors import DomainError
from mackrl.utils.seeding import SharedSeed, make_rng

logger = logging.getLogger(__name__)

SUITES = ("ck", "tree", "sampling", "gradients", "envs")
GRADIENT_TOLERANCE = 1e-4
SIGMA_BOUND = 3.0

# default sizes; ``samples`` replaces a suite's primary size and the derived sizes follow it
CK_CONFIGURATIONS = 200
FORMULA_PARAMETERISATIONS = 1000
MARGINAL_TREES = 20
MARGINAL_DRAWS = 100_000
HOLENSTEIN_PAIRS = 50
SAMPLING_TRIALS = 100_000
GRADIENT_TREES = 100
GRIDWORLD_STEPS = 10_000
MATRIX_RESETS = 20_000


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}: {self.name}" + (f" ({self.detail})" if self.detail else "")


# -- shared fixtures ---------------------------------------------------------


def random_world(rng, n_agents, n_other, size=6.0):
    entities = [EntityState(a, rng.uniform(0, size, 2), AGENT) for a in range(n_agents)]
    entities += [EntityState(f"e{k}", rng.uniform(0, size, 2), NON_AGENT) for k in range(n_other)]
    return WorldState(entities)


def random_tree_inputs(tree, rng, scale=1.0):
    groups = {tree.root: rng.normal(0, scale, tree.group_feature_size)}
    for pair in all_pairs(tree.n_agents):
        groups[pair] = rng.normal(0, scale, tree.group_feature_size)
    agents = {a: rng.normal(0, scale, tree.agent_feature_size) for a in range(tree.n_agents)}
    inputs = TreeInputs.shared(groups, agents)
    if tree.agent_head.is_recurrent:
        inputs.agent_hidden = {a: rng.normal(0, 0.5, tree.agent_head.hidden_size) for a in range(tree.n_agents)}
    return inputs


def random_tree(rng, n_agents, n_actions, architecture="linear", independent=False, features=4):
    """Policy tree with random (non-zero) weights"""
    tree = PolicyTree(n_agents, n_actions, features, features, architecture=architecture,
                      hidden_size=5, independent=independent, rng=rng, init_scale=1.0)
    # linear heads start at zero; random weights make the checks informative
    tree.set_parameters(rng.normal(0, 0.7, tree.parameter_size()))
    return tree


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def finite_difference(fn, params, h=1e-6):
    """Central-difference gradient of a scalar function of a flat parameter vector"""
    params = np.asarray(params, dtype=np.float64)
    out = np.zeros_like(params)
    for i in range(params.size):
        up = params.copy()
        down = params.copy()
        up[i] += h
        down[i] -= h
        out[i] = (fn(up) - fn(down)) / (2 * h)
    return out


def three_agent_formula(tree, joint_action, inputs):
    """Explicit three-agent joint policy summed over the three pair partitions"""
    u = joint_action
    ps = tree.pair_selector_probs(inputs)
    total = 0.0
    for k, partition in enumerate(tree.partitions):
        (single,), (i, j) = partition
        pc = tree.pair_controller_probs((i, j), inputs)
        p_i = tree.individual_probs(i, inputs)[u[i]]
        p_j = tree.individual_probs(j, inputs)[u[j]]
        p_single = tree.individual_probs(single, inputs)[u[single]]
        pair = pc[u[i] * tree.n_actions + u[j]] + pc[tree.delegate_index] * p_i * p_j
        total += ps[k] * p_single * pair
    return total


# -- suites ---------------------------------------------------------------------


def _scaled(size, samples, primary):
    return max(1, int(round(size * samples / primary)))


def verify_ck(samples=CK_CONFIGURATIONS, seed=0):
    """Recursive common knowledge against the closed form on random worlds"""
    rng = make_rng(seed, 11)
    mismatches = 0
    for trial in range(samples):
        n_agents = int(rng.integers(2, 6))
        world = random_world(rng, n_agents, int(rng.integers(0, 5)))
        if trial % 2:
            mask = CircularMask(rng.uniform(0.5, 5.0))
        else:
            keys = [EntityState(e.id, [i], e.kind) for i, e in enumerate(world)]
            world = WorldState(keys)
            mask = TabularMask(rng.random((len(keys), len(keys))) < 0.7)
        size = int(rng.integers(1, n_agents + 1))
        group = tuple(sorted(rng.choice(n_agents, size=size, replace=False).tolist()))
        closed = common_knowledge_closed_form(world, group, mask).entities
        for a in group:
            recursive = common_knowledge_recursive(world, group, mask, a, stationary_iterations(group))
            if recursive != closed:
                mismatches += 1
    return [CheckResult("ck", "recursive fixed point equals closed form", mismatches == 0,
                        f"{samples} configurations, {mismatches} mismatches")]


def sampled_joint_frequencies(tree, inputs, draws, base_seed):
    """Counts of decentralised joint actions over ``draws`` shared seeds"""
    space = list(product(range(tree.n_actions), repeat=tree.n_agents))
    index = {u: k for k, u in enumerate(space)}
    counts = np.zeros(len(space))
    for k in range(draws):
        shared = SharedSeed(base_seed + k)
        joint = tuple(tree.select_action(a, inputs, shared) for a in range(tree.n_agents))
        counts[index[joint]] += 1
    return space, counts


def verify_tree(samples=FORMULA_PARAMETERISATIONS, seed=0):
    """Partition counts, marginalisation and decentralised sampling of the policy tree"""
    rng = make_rng(seed, 12)
    results = []

    counts_ok = len(enumerate_pair_partitions(3)) == 3 and count_pair_partitions(11) == 10395
    counts_ok &= all(len(enumerate_pair_partitions(n)) == count_pair_partitions(n) for n in range(2, 9))
    results.append(CheckResult("tree", "pair partition counts", counts_ok))

    worst = 0.0
    for _ in range(samples):
        tree = random_tree(rng, 3, 3)
        inputs = random_tree_inputs(tree, rng)
        u = tuple(int(x) for x in rng.integers(0, 3, 3))
        worst = max(worst, abs(tree.joint_policy(u, inputs) - three_agent_formula(tree, u, inputs)))
    results.append(CheckResult("tree", "three-agent explicit formula", worst <= 1e-12,
                               f"{samples} parameterisations, max abs err {worst:.2e}"))

    worst = 0.0
    for n in (2, 3, 4):
        for architecture in ("linear", "mlp", "gru"):
            tree = random_tree(rng, n, 3, architecture)
            inputs = random_tree_inputs(tree, rng)
            total = sum(tree.joint_policy(u, inputs, epsilon=0.1) for u in product(range(3), repeat=n))
            worst = max(worst, abs(total - 1.0))
    results.append(CheckResult("tree", "joint policy normalisation", worst <= 1e-9, f"max |sum-1| {worst:.2e}"))

    mismatches = 0
    for n in (2, 3, 4):
        tree = random_tree(rng, n, 3)
        inputs = random_tree_inputs(tree, rng)
        for t in range(200):
            seed_t = SharedSeed(int(rng.integers(1 << 40)), t)
            central, _ = tree.sample_joint_action(inputs, seed_t, epsilon=0.05)
            local = tuple(tree.select_action(a, inputs, seed_t, epsilon=0.05) for a in range(n))
            mismatches += int(central != local)
    results.append(CheckResult("tree", "decentralised selection equals central traversal", mismatches == 0,
                               f"{mismatches} mismatches"))

    # one chi-square per tree; per-cell 3 sigma over hundreds of cells would fail by chance
    n_trees = max(3, _scaled(MARGINAL_TREES, samples, FORMULA_PARAMETERISATIONS))
    draws = max(1000, _scaled(MARGINAL_DRAWS, samples, FORMULA_PARAMETERISATIONS))
    worst_p = 1.0
    for k in range(n_trees):
        n = 2 + k % 3
        tree = random_tree(rng, n, 2)
        inputs = random_tree_inputs(tree, rng)
        space, counts = sampled_joint_frequencies(tree, inputs, draws, int(rng.integers(1 << 40)))
        expected = np.array([tree.joint_policy(u, inputs) for u in space])
        _, p_value = stats.chisquare(counts, expected * draws)
        worst_p = min(worst_p, float(p_value))
    results.append(CheckResult("tree", "sampled joint actions follow the marginal", worst_p > 1e-4 / n_trees,
                               f"{n_trees} trees x {draws} draws, min chi-square p {worst_p:.3g}"))
    return results


def heuristic_disagreement(p, q, trials, base_seed, node_id="heuristic"):
    """Fraction of shared uniforms on which the inverse CDFs of p and q differ"""
    disagree = 0
    for t in range(trials):
        delta = SharedSeed(base_seed, t).uniform(node_id)
        disagree += int(heuristic_sample(p, delta) != heuristic_sample(q, delta))
    return disagree / trials


def chisquare_marginal(counts, expected):
    """p-value of counts against a marginal; mass on impossible cells gives 0"""
    counts = np.asarray(counts, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64) * counts.sum()
    keep = expected > 0
    if counts[~keep].any():
        return 0.0
    if keep.sum() < 2:
        return 1.0
    return float(stats.chisquare(counts[keep], expected[keep])[1])


def verify_sampling(samples=SAMPLING_TRIALS, seed=0):
    """Disagreement and marginals of the two correlated samplers"""
    rng = make_rng(seed, 13)
    results = []
    example = (heuristic_sample([0.6, 0.4], 0.55), heuristic_sample([0.5, 0.5], 0.55))
    results.append(CheckResult("sampling", "inverse-CDF disagreement example", example == (0, 1), str(example)))

    rate = heuristic_disagreement([0.6, 0.4], [0.5, 0.5], samples, int(rng.integers(1 << 40)))
    sigma = np.sqrt(0.1 * 0.9 / samples)
    results.append(CheckResult("sampling", "inverse-CDF disagreement rate is 0.1",
                               abs(rate - 0.1) <= SIGMA_BOUND * sigma, f"{rate:.4f} over {samples} trials"))

    p = rng.dirichlet(np.ones(4))
    base = int(rng.integers(1 << 40))
    counts = np.bincount([heuristic_sample(p, SharedSeed(base, t).uniform("marginal")) for t in range(samples)],
                         minlength=p.size)
    p_value = chisquare_marginal(counts, p)
    results.append(CheckResult("sampling", "inverse-CDF samples follow the distribution", p_value > 1e-4,
                               f"chi-square p {p_value:.3g}"))

    config = HolensteinConfig()
    m = config.grid_steps
    violations = 0
    worst_p = 1.0
    for pair in range(HOLENSTEIN_PAIRS):
        k = int(rng.integers(2, 6))
        p = rng.dirichlet(np.ones(k))
        q = 0.8 * p + 0.2 * rng.dirichlet(np.ones(k))
        delta = total_variation(p, q)
        disagree = 0
        counts_p = np.zeros(k)
        counts_q = np.zeros(k)
        for _ in range(samples):
            order = rng.permutation(config.n_points(k))
            choice_p = holenstein_choice(p, order, m)
            choice_q = holenstein_choice(q, order, m)
            counts_p[choice_p] += 1
            counts_q[choice_q] += 1
            disagree += int(choice_p != choice_q)
        bound = holenstein_bound(delta, m, k)
        sigma = np.sqrt(max(bound * (1 - bound), 1e-12) / samples)
        violations += int(disagree / samples > bound + SIGMA_BOUND * sigma)
        for counts, dist in ((counts_p, p), (counts_q, q)):
            worst_p = min(worst_p, chisquare_marginal(counts, holenstein_marginal(dist, config)))
    results.append(CheckResult("sampling", "Holenstein disagreement bound", violations == 0,
                               f"{violations} of {HOLENSTEIN_PAIRS} pairs above 2d/(1+d) + {SIGMA_BOUND:g} sigma"))
    results.append(CheckResult("sampling", "Holenstein samples follow each agent's marginal",
                               worst_p > 1e-4 / (2 * HOLENSTEIN_PAIRS), f"min chi-square p {worst_p:.3g}"))
    return results


GRADIENT_CASES = ((2, "linear"), (3, "mlp"), (4, "gru"), (3, "linear"))


def verify_gradients(samples=GRADIENT_TREES, seed=0):
    """Analytic gradients of every head and policy against central differences"""
    rng = make_rng(seed, 14)
    worst = 0.0
    for trial in range(samples):
        n, architecture = GRADIENT_CASES[trial % len(GRADIENT_CASES)]
        independent = n == 4 and (trial // len(GRADIENT_CASES)) % 2 == 1
        tree = random_tree(rng, n, 3, architecture, independent=independent)
        inputs = random_tree_inputs(tree, rng)
        u = tuple(int(x) for x in rng.integers(0, 3, n))
        params = tree.get_parameters()

        def log_prob(flat):
            tree.set_parameters(flat)
            return np.log(tree.joint_policy(u, inputs, epsilon=0.05))

        numeric = finite_difference(log_prob, params)
        tree.set_parameters(params)
        analytic = tree.log_joint_policy_grad(u, inputs, epsilon=0.05)
        worst = max(worst, relative_error(analytic, numeric))

        if tree.independent:
            continue
        pair = (0, 1)
        pair_u = u[:2]

        def pair_log_prob(flat):
            tree.set_parameters(flat)
            return np.log(tree.joint_policy(pair_u, inputs, pair))

        numeric = finite_difference(pair_log_prob, params)
        tree.set_parameters(params)
        worst = max(worst, relative_error(tree.log_joint_policy_grad(pair_u, inputs, pair), numeric))

    for conditioning in ("union", "common"):
        policy = JointActionPolicy(2, 3, 4, conditioning, "mlp", 5, rng=rng)
        inputs = TreeInputs.shared({(0, 1): rng.normal(size=4)}, {0: rng.normal(size=2), 1: rng.normal(size=2)},
                                   joint_features=rng.normal(size=4))
        params = policy.get_parameters()

        def joint_log_prob(flat):
            policy.set_parameters(flat)
            return np.log(policy.joint_policy((2, 1), inputs, epsilon=0.1))

        numeric = finite_difference(joint_log_prob, params)
        policy.set_parameters(params)
        worst = max(worst, relative_error(policy.log_joint_policy_grad((2, 1), inputs, epsilon=0.1), numeric))

    value = ValueHead(6, 5).initialise(rng)
    x = rng.normal(size=6)
    params = value.params.copy()

    def value_at(flat):
        value.params = flat
        return value.value(x)

    numeric = finite_difference(value_at, params)
    value.params = params
    worst = max(worst, relative_error(value.grad(x), numeric))

    gru = GRUHead(3, 4, 5).initialise(rng)
    x = rng.normal(size=3)
    hidden = rng.normal(size=5)
    w = rng.normal(size=4)
    params = gru.params.copy()

    def gru_at(flat):
        gru.params = flat
        return float(w @ gru.forward(x, hidden)[0])

    numeric = finite_difference(gru_at, params)
    gru.params = params
    worst = max(worst, relative_error(gru.grad(x, w, hidden), numeric))
    return [CheckResult("gradients", "analytic gradients match central differences",
                        worst <= GRADIENT_TOLERANCE, f"{samples} trees, max relative error {worst:.2e}")]


def verify_envs(samples=MATRIX_RESETS, seed=0):
    """Matrix-game calibration and oracle, gridworld observations and coherence"""
    rng = make_rng(seed, 15)
    results = []
    read_back = all(
        payoff(game, (i, j)) == matrix[i, j] / 5.0
        for game, matrix in enumerate((PAYOFF_A, PAYOFF_B)) for i in range(5) for j in range(5)
    )
    results.append(CheckResult("envs", "payoff tables read back exactly", read_back and MATRICES.shape == (2, 5, 5)))

    worst_z = 0.0
    worst_p = 1.0
    for p_ck in (0.0, 0.25, 0.5, 0.75):
        config = MatrixGameConfig(p_ck=p_ck)
        seen = 0
        branches = np.zeros(4)
        unset = 0
        for _ in range(samples):
            state, observations = matrix_reset(config, rng)
            seen += observations[0].private_game is not None
            if not state.ck_bit:
                unset += 1
                k = 2 * (state.private[0] is None) + (state.private[1] is None)
                branches[k] += 1
        sigma = np.sqrt(0.75 * 0.25 / samples)
        worst_z = max(worst_z, abs(seen / samples - 0.75) / sigma)
        ps = config.p_sigma
        if unset:
            expected = np.array([ps * ps, ps * (1 - ps), (1 - ps) * ps, (1 - ps) * (1 - ps)])
            worst_p = min(worst_p, chisquare_marginal(branches, expected))
    results.append(CheckResult("envs", "matrix observation rate is 0.75", worst_z <= 4.0, f"max |z| {worst_z:.2f}"))
    results.append(CheckResult("envs", "private observation branches", worst_p > 1e-4, f"min p {worst_p:.3g}"))

    ordering_ok = True
    for f in np.linspace(0, 1, 5):
        oracle = matrix_oracle(MatrixGameConfig.from_ck_fraction(f))
        ordering_ok &= oracle["JAL"] >= oracle["MACKRL"] - 1e-12
        ordering_ok &= oracle["MACKRL"] >= max(oracle["IAC"], oracle["CK-JAL"]) - 1e-12
    results.append(CheckResult("envs", "oracle ordering JAL >= MACKRL >= max(IAC, CK-JAL)", bool(ordering_ok)))

    env = GridWorldEnv(GridWorldConfig())
    tree = PolicyTree(env.n_agents, env.n_actions, env.group_feature_size, env.agent_feature_size,
                      architecture="linear", rng=rng)
    tree.set_parameters(rng.normal(0, 0.5, tree.parameter_size()))
    target_steps = max(200, _scaled(GRIDWORLD_STEPS, samples, MATRIX_RESETS))
    mismatches = 0
    exact_obs = True
    steps = 0
    episode = 0
    while steps < target_steps:
        env.reset(make_rng(seed, 16, episode))
        done = False
        while not done:
            world = env.world_state()
            for a in range(env.n_agents):
                visible = {e.id for e in world if env.mask(world.features(a), e.features)} | {a}
                exact_obs &= set(env.observation(a).ids()) == visible
            inputs = env.tree_inputs()
            shared = SharedSeed(episode, env.t)
            central, _ = tree.sample_joint_action(inputs, shared, epsilon=0.1)
            local = tuple(tree.select_action(a, inputs, shared, epsilon=0.1) for a in range(env.n_agents))
            mismatches += int(central != local)
            _, done = env.step(local)
            steps += 1
        episode += 1
    results.append(CheckResult("envs", "gridworld observations are exactly the visible entities", bool(exact_obs)))
    results.append(CheckResult("envs", "gridworld decentralised execution is coherent", mismatches == 0,
                               f"{steps} steps, {mismatches} mismatches"))
    return results


def run_suite(name, samples=None, seed=0):
    """Run one suite (or ``all``); ``samples`` overrides each suite's default size"""
    suites = {
        "ck": verify_ck,
        "tree": verify_tree,
        "sampling": verify_sampling,
        "gradients": verify_gradients,
        "envs": verify_envs,
    }
    if name == "all":
        names = list(SUITES)
    elif name in suites:
        names = [name]
    else:
        raise DomainError(f"Unknown suite '{name}', expected one of {SUITES + ('all',)}")
    results = []
    for suite in names:
        logger.info(f"Running verification suite: {suite}")
        kwargs = {"seed": seed}
        if samples is not None:
            kwargs["samples"] = samples
        results.extend(suites[suite](**kwargs))
    return results
