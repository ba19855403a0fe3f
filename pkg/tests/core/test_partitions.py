import pytest

from mackrl.core.partitions import (
    all_pairings,
    all_pairs,
    count_pair_partitions,
    enumerate_pair_partitions,
    group_of,
    independent_partition,
    subsample_partitions,
    validate_partition,
)
from mackrl.errors import DomainError


def test_three_agents_have_three_partitions_in_canonical_order():
    assert enumerate_pair_partitions(3) == [
        ((0,), (1, 2)),
        ((1,), (0, 2)),
        ((2,), (0, 1)),
    ]


def test_four_agents():
    assert enumerate_pair_partitions(4) == [
        ((0, 1), (2, 3)),
        ((0, 2), (1, 3)),
        ((0, 3), (1, 2)),
    ]


def test_eleven_agents_count():
    assert count_pair_partitions(11) == 10395


@pytest.mark.parametrize("n", range(2, 9))
def test_enumeration_matches_formula(n):
    partitions = enumerate_pair_partitions(n)
    assert len(partitions) == count_pair_partitions(n)
    assert len(set(partitions)) == len(partitions)
    for partition in partitions:
        validate_partition(partition, n)
        assert sum(len(g) == 1 for g in partition) == n % 2


def test_all_pairings_of_empty_list_is_one_empty_pairing():
    assert list(all_pairings([])) == [[]]


@pytest.mark.parametrize("n", [0, 1])
def test_too_few_agents(n):
    with pytest.raises(DomainError):
        enumerate_pair_partitions(n)


def test_subsample_is_deterministic_and_ordered():
    partitions = enumerate_pair_partitions(6)
    a = subsample_partitions(partitions, 5, seed=3)
    b = subsample_partitions(partitions, 5, seed=3)
    assert a == b
    assert len(a) == 5
    assert a == sorted(a, key=partitions.index)


def test_full_subsample_is_identity():
    partitions = enumerate_pair_partitions(4)
    assert subsample_partitions(partitions, 3, seed=9) == partitions


def test_subsample_size_out_of_range():
    with pytest.raises(DomainError):
        subsample_partitions(enumerate_pair_partitions(4), 0, seed=0)
    with pytest.raises(DomainError):
        subsample_partitions(enumerate_pair_partitions(4), 4, seed=0)


def test_helpers():
    assert all_pairs(3) == [(0, 1), (0, 2), (1, 2)]
    assert independent_partition(3) == ((0,), (1,), (2,))
    assert group_of(((0,), (1, 2)), 2) == (1, 2)
    with pytest.raises(DomainError):
        group_of(((0,), (1, 2)), 5)
    with pytest.raises(DomainError):
        validate_partition(((0, 1), (1, 2)), 3)
