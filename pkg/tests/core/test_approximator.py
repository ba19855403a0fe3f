import numpy as np
import pytest

from mackrl.core.approximator import (
    AdamState,
    ExplorationSchedule,
    GRUHead,
    LinearHead,
    MLPHead,
    Optimiser,
    ValueHead,
    adam_step,
    bounded_softmax,
    bounded_softmax_sample,
    checkpoint_files,
    greedy_action,
    load_checkpoint,
    make_head,
    save_checkpoint,
)
from mackrl.core.verification import finite_difference, relative_error, verify_gradients
from mackrl.errors import DomainError


def test_bounded_softmax_example():
    probs = bounded_softmax([np.log(3.0), 0.0], 0.5)
    np.testing.assert_allclose(probs, [0.625, 0.375])


def test_bounded_softmax_limits():
    logits = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(bounded_softmax(logits, 1.0), np.full(3, 1 / 3))
    assert bounded_softmax(logits, 0.3).sum() == pytest.approx(1.0)
    with pytest.raises(DomainError):
        bounded_softmax(logits, 1.5)
    with pytest.raises(DomainError):
        bounded_softmax([np.inf, 0.0], 0.1)


def test_sampling_and_greedy():
    rng = np.random.default_rng(0)
    draws = [bounded_softmax_sample([0.0, 0.0, 50.0], 0.0, rng) for _ in range(20)]
    assert set(draws) == {2}
    assert greedy_action([0.4, 0.4, 0.2]) == 0


def test_linear_heads_start_uniform():
    head = make_head("linear", 4, 3, rng=np.random.default_rng(0))
    np.testing.assert_allclose(head.probs(np.ones(4)), np.full(3, 1 / 3))


@pytest.mark.parametrize("cls", [LinearHead, MLPHead, GRUHead])
def test_head_gradients_match_finite_differences(cls):
    rng = np.random.default_rng(4)
    head = cls(3, 4, 5)
    head.params = rng.normal(0, 0.5, head.layout.size)
    x = rng.normal(size=3)
    hidden = rng.normal(size=5) if head.is_recurrent else None
    w = rng.normal(size=4)
    params = head.params.copy()

    def scalar(flat):
        head.params = flat
        return float(w @ head.forward(x, hidden)[0])

    numeric = finite_difference(scalar, params)
    head.params = params
    assert relative_error(head.grad(x, w, hidden), numeric) <= 1e-4


def test_gradient_suite_passes():
    [result] = verify_gradients(samples=4, seed=1)
    assert result.passed, result.detail


def test_gru_carries_hidden_state():
    head = GRUHead(2, 3, 4).initialise(np.random.default_rng(1))
    x = np.array([0.3, -0.7])
    _, h1 = head.forward(x, head.initial_hidden())
    logits_a, _ = head.forward(x, h1)
    logits_b, _ = head.forward(x, head.initial_hidden())
    assert h1.shape == (4,)
    assert not np.allclose(logits_a, logits_b)
    with pytest.raises(DomainError):
        head.forward(x, np.zeros(3))


def test_input_shape_is_checked():
    with pytest.raises(DomainError):
        MLPHead(3, 2).forward(np.zeros(4))
    with pytest.raises(DomainError):
        make_head("transformer", 3, 2)


def test_value_head_is_scalar():
    value = ValueHead(3, 4).initialise(np.random.default_rng(2))
    assert isinstance(value.value(np.ones(3)), float)
    assert value.grad(np.ones(3)).shape == value.params.shape


def test_adam_first_step_moves_by_learning_rate():
    params = np.array([1.0, -1.0, 0.5])
    grads = np.array([0.3, -2.0, 0.0])
    new, state = adam_step(params, grads, AdamState.zeros(3), lr=0.01)
    np.testing.assert_allclose(new, params - 0.01 * np.sign(grads), atol=1e-7)
    assert state.t == 1


def test_adam_zero_gradient_leaves_parameters():
    opt = Optimiser(2, lr=0.1)
    params = np.array([0.2, 0.4])
    np.testing.assert_array_equal(opt.step(params, np.zeros(2)), params)


def test_adam_shape_mismatch():
    with pytest.raises(DomainError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2))


def test_exploration_schedule():
    schedule = ExplorationSchedule(0.5, 0.01, 50000)
    assert schedule.value(0) == pytest.approx(0.5)
    assert schedule.value(25000) == pytest.approx(0.255)
    assert schedule.value(50000) == pytest.approx(0.01)
    assert schedule.value(10 ** 6) == pytest.approx(0.01)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    params = np.random.default_rng(3).normal(size=37)
    params[0] = np.nextafter(1.0, 2.0)
    path = save_checkpoint(tmp_path / "ckpt" / "actor", params, {"architecture": "mlp", "seed": 3})
    loaded, header = load_checkpoint(path)
    assert loaded.tobytes() == params.astype("<f8").tobytes()
    assert header["architecture"] == "mlp"
    assert header["size"] == 37
    assert (tmp_path / "ckpt" / "actor.bin").stat().st_size == 37 * 8


def test_truncated_checkpoint_is_rejected(tmp_path):
    path = save_checkpoint(tmp_path / "actor", np.zeros(4), {})
    np.zeros(3).astype("<f8").tofile(tmp_path / "actor.bin")
    with pytest.raises(DomainError):
        load_checkpoint(path)


def test_checkpoint_names_with_dots_keep_their_stem(tmp_path):
    run_dir = tmp_path / "flip_p=0.1"
    first = save_checkpoint(run_dir / "actor_flip_p=0.1", np.arange(3.0), {"flip_p": 0.1})
    second = save_checkpoint(run_dir / "actor_flip_p=0.2", np.arange(5.0), {"flip_p": 0.2})
    assert checkpoint_files(first) == (run_dir / "actor_flip_p=0.1.bin", run_dir / "actor_flip_p=0.1.json")
    assert sorted(p.name for p in run_dir.iterdir()) == [
        "actor_flip_p=0.1.bin", "actor_flip_p=0.1.json", "actor_flip_p=0.2.bin", "actor_flip_p=0.2.json",
    ]
    assert load_checkpoint(first)[1]["flip_p"] == 0.1
    assert load_checkpoint(second)[0].size == 5
