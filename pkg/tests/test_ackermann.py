import math
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdsu.ackermann import (
    ACKERMANN_CAP,
    AckermannOverflow,
    NodePotential,
    WorkBoundParams,
    ackermann,
    alpha,
    density,
    node_potential,
    work_bound,
)


@lru_cache(maxsize=None)
def ackermann_recursive(k, n):
    # the three-case recursion, straight from the definition
    if k == 0:
        return n + 1
    if n == 0:
        return ackermann_recursive(k - 1, 1)
    return ackermann_recursive(k - 1, ackermann_recursive(k, n - 1))


def test_ackermann_examples():
    assert ackermann(0, 5) == 6
    assert ackermann(1, 3) == 5
    assert ackermann(3, 3) == 61


@pytest.mark.parametrize("k,limit", [(0, 40), (1, 40), (2, 40), (3, 8)])
def test_ackermann_matches_recursion(k, limit):
    for n in range(limit):
        assert ackermann(k, n) == ackermann_recursive(k, n)


def test_level_three_closed_form():
    for n in range(50):
        assert ackermann(3, n) == 2 ** (n + 3) - 3


def test_level_four_values_and_overflow():
    assert ackermann(4, 0) == 13
    assert ackermann(4, 1) == 65533
    with pytest.raises(AckermannOverflow):
        ackermann(4, 2)
    with pytest.raises(AckermannOverflow):
        ackermann(3, 62)
    assert ackermann(3, 58) < ACKERMANN_CAP


def test_negative_arguments_rejected():
    with pytest.raises(ValueError):
        ackermann(-1, 0)
    with pytest.raises(ValueError):
        ackermann(0, -1)


def above(k, n, bound):
    try:
        return ackermann(k, n) > bound
    except AckermannOverflow:
        return True


@given(st.integers(0, 4), st.integers(0, 20))
def test_strictly_increasing_in_both_arguments(k, n):
    if above(k, n, ACKERMANN_CAP):
        return
    value = ackermann(k, n)
    assert above(k, n + 1, value)
    assert above(k + 1, n, value)


def test_alpha_examples():
    assert alpha(10, 0) == 4
    assert alpha(3, 1) == 2
    for d in (0, 0.5, 1, 7.9, 1e6):
        assert alpha(1, d) == 1


def test_alpha_definition_by_search():
    for n in (1, 2, 5, 13, 100, 65533, 65534, 2**20):
        for d in (0, 1, 2, 3, 10):
            k = alpha(n, d)
            assert k >= 1
            assert above(k, d, n)
            for j in range(1, k):
                assert not above(j, d, n)


def test_alpha_treats_overflow_as_large():
    assert alpha(2**60, 2) == 4
    # A_5(0) = 65533 and A_6(0) = A_4(65533) overflows
    assert alpha(2**62, 0) == 6
    assert alpha(65533, 0) == 6
    assert alpha(65532, 0) == 5


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.floats(0, 100))
def test_alpha_nondecreasing_in_n(n1, n2, d):
    lo, hi = sorted((n1, n2))
    assert alpha(lo, d) <= alpha(hi, d)


@given(st.integers(1, 10**9), st.floats(0, 100), st.floats(0, 100))
def test_alpha_nonincreasing_in_d(n, d1, d2):
    lo, hi = sorted((d1, d2))
    assert alpha(n, lo) >= alpha(n, hi)


def test_density_examples():
    assert density(WorkBoundParams(100, 10000, 10, "two")) == 10.0
    assert density(WorkBoundParams(100, 10000, 10, "one")) == 1.0
    assert density(WorkBoundParams(100, 100, 10, "two")) == pytest.approx(0.1)
    assert density(WorkBoundParams(100, 10000, 10, "cond-two")) == 10.0


def test_density_undefined_without_compaction():
    with pytest.raises(ValueError, match="undefined for uncompacted finds"):
        density(WorkBoundParams(100, 100, 10, "naive"))


def test_params_validation():
    with pytest.raises(ValueError):
        WorkBoundParams(0, 1, 1)
    with pytest.raises(ValueError):
        WorkBoundParams(4, 4, 2, "halving")
    assert WorkBoundParams(4, 8, 2).standard
    assert not WorkBoundParams(4, 8, 1).standard
    assert not WorkBoundParams(8, 4, 2).standard


def test_work_bound_examples():
    n, m = 2**16, 2**18
    assert work_bound(WorkBoundParams(n, m, 4)) == m * (alpha(n, 1) + 1)
    assert work_bound(WorkBoundParams(4, 4, 2)) == pytest.approx(4 * (alpha(4, 0.5) + math.log2(3)))


@settings(max_examples=50)
@given(st.integers(1, 2**20), st.integers(1, 2**20), st.integers(1, 64), st.sampled_from(["one", "two", "cond-two"]))
def test_work_bound_nondecreasing_in_m(n, m, p, splitting):
    a = work_bound(WorkBoundParams(n, m, p, splitting))
    b = work_bound(WorkBoundParams(n, m + 1 + m // 3, p, splitting))
    assert b >= a


def test_node_potential_examples():
    assert node_potential(2, 2, 100, 0).level == 0
    assert node_potential(2, 3, 100, 0) == NodePotential(level=1, index=1, count=3)


def test_node_potential_preconditions():
    with pytest.raises(ValueError):
        node_potential(3, 2, 100, 0)
    with pytest.raises(ValueError):
        node_potential(1, 5, 100, 2.5)  # a low node: rank below ceil(d)


@given(st.integers(1, 12), st.integers(0, 200))
def test_node_potential_definitions(rank, extra):
    parent = rank + extra
    pot = node_potential(rank, parent, 2**20, 0)
    assert (pot.level == 0) == (rank == parent)
    assert above(pot.level, rank, parent)
    if pot.level > 0:
        assert not above(pot.level - 1, rank, parent)
        assert 0 <= pot.index < rank
        assert not above(pot.level, pot.index, parent)
        assert above(pot.level, pot.index + 1, parent)
    assert pot.count == rank * pot.level + pot.index


@given(st.integers(1, 10), st.integers(0, 100), st.integers(0, 100))
def test_potential_monotone_in_parent_rank(rank, a, b):
    lo, hi = sorted((rank + a, rank + b))
    before = node_potential(rank, lo, 2**20, 0)
    after = node_potential(rank, hi, 2**20, 0)
    assert after.level >= before.level
    assert after.count >= before.count
    if after.level == before.level:
        assert after.index >= before.index
