import numpy as np

from mackrl.utils.seeding import SharedSeed, derive_seed, episode_seed, make_rng, node_code


def test_node_codes_are_stable():
    assert node_code("pc:0-1") == node_code("pc:0-1")
    assert node_code("pc:0-1") != node_code("pc:0-2")
    assert 0 <= node_code("ps") < 2 ** 32


def test_same_seed_same_stream_in_any_order():
    a = SharedSeed(42, 3)
    b = SharedSeed(42, 3)
    first = [a.uniform(n) for n in ("ps", "pc:0-1", "agent:2")]
    second = [b.uniform(n) for n in ("agent:2", "pc:0-1", "ps")][::-1]
    assert first == second


def test_streams_differ_by_node_and_time():
    seed = SharedSeed(7)
    draws = {seed.uniform("ps"), seed.uniform("pc:0-1"), seed.at(1).uniform("ps"), SharedSeed(8).uniform("ps")}
    assert len(draws) == 4


def test_node_streams_look_independent():
    seed = SharedSeed(11, 0)
    x = np.array([seed.at(t).uniform("pc:0-1") for t in range(2000)])
    y = np.array([seed.at(t).uniform("pc:1-2") for t in range(2000)])
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.1
    assert abs(x.mean() - 0.5) < 0.05


def test_derived_seeds():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(5) < 2 ** 63
    assert episode_seed(0, 4) == episode_seed(0, 4)
    assert episode_seed(0, 4) != episode_seed(0, 5)
    np.testing.assert_array_equal(make_rng(3, 1).random(4), make_rng(3, 1).random(4))


def test_consecutive_timesteps_share_no_run_of_draws():
    seed = SharedSeed(42)
    for node in ("ps", "pc:0-1", "agent:3"):
        now = seed.stream(node).random(64)
        later = seed.at(1).stream(node).random(64)
        for shift in range(1, 56):
            assert not np.array_equal(now[shift:shift + 8], later[:8])
            assert not np.array_equal(later[shift:shift + 8], now[:8])
        assert not np.isin(later, now).any()
