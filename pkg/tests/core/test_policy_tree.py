from itertools import product

import numpy as np
import pytest

from mackrl.core.correlated_sampling import CorrelatedSampler
from mackrl.core.policy_tree import PolicyTree, TreeInputs, build_policy_tree
from mackrl.core.verification import (
    three_agent_formula,
    finite_difference,
    random_tree,
    random_tree_inputs,
    relative_error,
    verify_tree,
)
from mackrl.errors import DomainError, StructuralError, ZeroProbabilityError
from mackrl.utils.seeding import SharedSeed


def test_explicit_three_agent_formula(rng):
    for _ in range(200):
        tree = random_tree(rng, 3, 3)
        inputs = random_tree_inputs(tree, rng)
        u = tuple(int(x) for x in rng.integers(0, 3, 3))
        assert tree.joint_policy(u, inputs) == pytest.approx(three_agent_formula(tree, u, inputs), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("architecture", ["linear", "mlp", "gru"])
def test_joint_policy_sums_to_one(rng, n, architecture):
    tree = random_tree(rng, n, 3, architecture)
    inputs = random_tree_inputs(tree, rng)
    total = sum(tree.joint_policy(u, inputs, epsilon=0.2) for u in product(range(3), repeat=n))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_pair_marginal_sums_to_one(tree3, tree_inputs):
    total = sum(tree3.joint_policy(u, tree_inputs, group=(0, 2)) for u in product(range(3), repeat=2))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_uniform_tree_gives_uniform_joint_policy(uniform_tree):
    rng = np.random.default_rng(0)
    inputs = random_tree_inputs(uniform_tree, rng)
    for u in product(range(2), repeat=3):
        assert uniform_tree.joint_policy(u, inputs) == pytest.approx(1 / 8)


def test_epsilon_one_gives_uniform_joint_policy(tree3, tree_inputs):
    for u in product(range(3), repeat=3):
        assert tree3.joint_policy(u, tree_inputs, epsilon=1.0) == pytest.approx(1 / 27)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_decentralised_selection_matches_central_traversal(rng, n):
    tree = random_tree(rng, n, 3)
    inputs = random_tree_inputs(tree, rng)
    for t in range(100):
        seed = SharedSeed(77, t)
        central, trace = tree.sample_joint_action(inputs, seed, epsilon=0.1)
        local = tuple(tree.select_action(a, inputs, seed, epsilon=0.1) for a in range(n))
        assert local == central
        assert 0 <= trace["partition"] < len(tree.partitions)


def test_holenstein_sampler_is_also_consistent(rng):
    tree = random_tree(rng, 3, 3)
    tree.sampler = CorrelatedSampler("holenstein")
    inputs = random_tree_inputs(tree, rng)
    for t in range(30):
        seed = SharedSeed(5, t)
        central, _ = tree.sample_joint_action(inputs, seed)
        assert tuple(tree.select_action(a, inputs, seed) for a in range(3)) == central


def test_greedy_selection_is_deterministic(tree3, tree_inputs):
    first = tree3.sample_joint_action(tree_inputs, SharedSeed(1), greedy=True)[0]
    second = tree3.sample_joint_action(tree_inputs, SharedSeed(2), greedy=True)[0]
    assert first == second


def test_trace_records_pair_decisions(tree3, tree_inputs):
    trace = {}
    tree3.select_action(1, tree_inputs, SharedSeed(3), trace=trace)
    partition = tree3.partitions[trace["partition"]]
    group = next(g for g in partition if 1 in g)
    if len(group) == 2:
        assert 0 <= trace["pairs"][group] <= tree3.delegate_index
    else:
        assert "pairs" not in trace


def test_sampled_frequencies_follow_the_marginal():
    [*_, result] = verify_tree(samples=30, seed=3)
    assert result.passed, result.detail


@pytest.mark.parametrize("n,architecture", [(2, "linear"), (3, "mlp"), (3, "gru"), (4, "linear")])
def test_log_joint_policy_gradient_matches_finite_differences(rng, n, architecture):
    tree = random_tree(rng, n, 3, architecture)
    inputs = random_tree_inputs(tree, rng)
    u = tuple(int(x) for x in rng.integers(0, 3, n))
    params = tree.get_parameters()

    def log_prob(flat):
        tree.set_parameters(flat)
        return np.log(tree.joint_policy(u, inputs, epsilon=0.05))

    numeric = finite_difference(log_prob, params)
    tree.set_parameters(params)
    log_p, analytic = tree.log_joint_policy_and_grad(u, inputs, epsilon=0.05)
    assert log_p == pytest.approx(np.log(tree.joint_policy(u, inputs, epsilon=0.05)))
    assert relative_error(analytic, numeric) <= 1e-4


def test_independent_tree_factorises(rng):
    tree = random_tree(rng, 3, 3, independent=True)
    inputs = random_tree_inputs(tree, rng)
    u = (2, 0, 1)
    expected = np.prod([tree.individual_probs(a, inputs)[u[a]] for a in range(3)])
    assert tree.joint_policy(u, inputs) == pytest.approx(expected)
    assert tree.pc_head is None
    with pytest.raises(StructuralError):
        tree.joint_policy((0, 1), inputs, group=(0, 1))


def test_individual_gradient(rng):
    tree = random_tree(rng, 2, 4, "mlp")
    inputs = random_tree_inputs(tree, rng)
    params = tree.get_parameters()

    def log_prob(flat):
        tree.set_parameters(flat)
        return np.log(tree.individual_probs(1, inputs, epsilon=0.1)[3])

    numeric = finite_difference(log_prob, params)
    tree.set_parameters(params)
    _, analytic = tree.log_individual_policy_grad(1, 3, inputs, epsilon=0.1)
    assert relative_error(analytic, numeric) <= 1e-4


def test_zero_probability_action_raises(rng):
    tree = PolicyTree(2, 2, 3, 3, architecture="linear")
    # biases saturate the softmax so action 1 and every pair action underflow to zero
    params = tree.get_parameters()
    b_slice = tree.head_slices()["individual"]
    start, stop = tree.agent_head.layout.offsets["b"]
    params[b_slice.start + start:b_slice.start + stop] = [2000.0, -2000.0]
    start, stop = tree.pc_head.layout.offsets["b"]
    pc = tree.head_slices()["pair_controller"]
    bias = np.full(stop - start, -2000.0)
    bias[-1] = 2000.0
    params[pc.start + start:pc.start + stop] = bias
    tree.set_parameters(params)
    inputs = random_tree_inputs(tree, rng)
    assert tree.joint_policy((1, 1), inputs) == 0.0
    with pytest.raises(ZeroProbabilityError):
        tree.log_joint_policy_grad((1, 1), inputs)


def test_validation_errors(tree3, tree_inputs):
    with pytest.raises(DomainError):
        tree3.joint_policy((0, 1), tree_inputs)
    with pytest.raises(DomainError):
        tree3.joint_policy((0, 1, 7), tree_inputs)
    with pytest.raises(DomainError):
        tree3.select_action(5, tree_inputs, SharedSeed(0))
    with pytest.raises(StructuralError):
        TreeInputs({}, {}).group((0, 1), 0)
    with pytest.raises(DomainError):
        tree3.set_parameters(np.zeros(3))
    with pytest.raises(DomainError):
        PolicyTree(1, 2, 3, 3)


def test_build_from_settings(rng):
    tree = build_policy_tree(4, 3, 5, 5, {"partition_subsample": 2, "architecture": "mlp",
                                          "correlated_sampler": "holenstein"}, rng)
    assert len(tree.partitions) == 2
    assert tree.sampler.kind == "holenstein"
    assert dict(tree.named_heads())["pair_selector"].n_outputs == 2


def test_parameters_round_trip(tree3):
    flat = tree3.get_parameters()
    tree3.set_parameters(flat * 2)
    np.testing.assert_array_equal(tree3.get_parameters(), flat * 2)
