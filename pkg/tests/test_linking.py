import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdsu.forest import CAS_PARENT_WORD, DCAS_ELINK, READ_WORD, Forest, Linking, pack
from cdsu.linking import (
    DCAS_ELINK_KIND,
    RANDOMIZED_PARENT,
    RANDOMIZED_RANK_BUMP,
    LinkPreconditionError,
    analysis_ranks,
    link_by_index,
    link_by_rank,
    random_index_rank,
)
from cdsu.ops import Proc, call
from cdsu.scenarios import build_binomial_tree


def ctx_for(n, linking="index", compaction="naive", flips=None, **kw):
    f = Forest(n, linking, compaction, **kw)
    return Proc(f, 1, 0, flips)


def test_index_link_smaller_under_larger():
    for u, v in ((3, 7), (7, 3)):
        ctx = ctx_for(10)
        out = call(ctx, link_by_index, u, v)
        assert out.succeeded and out.child == 3 and out.parent == 7
        assert ctx.forest.parent[3] == 7


def test_index_link_stale_root_fails():
    ctx = ctx_for(10)
    ctx.forest.parent[3] = 5
    out = call(ctx, link_by_index, 3, 7)
    assert not out.succeeded
    assert ctx.forest.parent == [0, 1, 2, 5, 4, 5, 6, 7, 8, 9]


def test_link_to_self_rejected():
    ctx = ctx_for(4)
    with pytest.raises(LinkPreconditionError):
        call(ctx, link_by_index, 2, 2)
    ctx = ctx_for(4, "rank-dcas")
    with pytest.raises(LinkPreconditionError):
        call(ctx, link_by_rank, 2, 2)


def test_rank_link_lower_rank_becomes_child():
    ctx = ctx_for(4, "rank-dcas")
    ctx.forest.word[1] = pack(1)
    out = call(ctx, link_by_rank, 0, 1)
    assert out.succeeded and ctx.forest.parent[0] == 1 and ctx.forest.rank(1) == 1
    ctx = ctx_for(4, "rank-dcas")
    ctx.forest.word[0] = pack(2)
    ctx.forest.word[1] = pack(1)
    out = call(ctx, link_by_rank, 0, 1)
    assert out.succeeded and ctx.forest.parent[1] == 0 and ctx.forest.rank(0) == 2


def test_equal_rank_dcas_link():
    ctx = ctx_for(4, "rank-dcas")
    out = call(ctx, link_by_rank, 0, 1)
    assert out.kind == DCAS_ELINK_KIND and out.succeeded
    assert ctx.forest.parent[0] == 1 and ctx.forest.rank(1) == 1


def test_dcas_fails_after_interposed_rank_bump():
    ctx = ctx_for(4, "rank-dcas")
    f = ctx.forest
    gen = link_by_rank(ctx, 0, 1)
    req = next(gen)
    while req[0] == READ_WORD:
        req = gen.send(f.apply(req))
    assert req[0] == DCAS_ELINK
    f.cas_word(1, 0, pack(1))  # another process raises v's rank first
    try:
        gen.send(f.apply(req))
    except StopIteration as stop:
        out = stop.value
    assert not out.succeeded
    assert f.parent[0] == 0 and f.parent[1] == 1


@pytest.mark.parametrize("k", range(0, 7))
def test_rounds_of_equal_rank_links_reach_rank_k(k):
    ctx = ctx_for(2**k, "rank-dcas")
    root = build_binomial_tree(ctx, 2**k)
    assert ctx.forest.rank(root) == k
    assert sum(ctx.forest.word) == 2**k - 1


def test_randomized_heads_makes_parent():
    ctx = ctx_for(10, "rank-rand", flips=[True])
    out = call(ctx, link_by_rank, 2, 9)
    assert out.kind == RANDOMIZED_PARENT and out.succeeded
    assert ctx.forest.parent[2] == 9 and ctx.forest.rank(9) == 0


def test_randomized_tails_bumps_rank():
    ctx = ctx_for(10, "rank-rand", flips=[False])
    out = call(ctx, link_by_rank, 9, 2)
    assert out.kind == RANDOMIZED_RANK_BUMP and not out.succeeded
    assert ctx.forest.parent[2] == 2 and ctx.forest.rank(2) == 1


def test_randomized_no_flip_at_rank_cap():
    ctx = ctx_for(2, "rank-rand", flips=[False, False])
    f = ctx.forest
    f.word[0] = f.word[1] = pack(f.rank_cap)
    out = call(ctx, link_by_rank, 0, 1)
    assert out.kind == RANDOMIZED_PARENT and out.succeeded
    assert len(ctx.flips) == 2  # no coin consumed


def test_randomized_attempts_verify_root_and_rank():
    ctx = ctx_for(4, "rank-rand", flips=[True])
    f = ctx.forest
    gen = link_by_rank(ctx, 0, 1)
    req = next(gen)
    while req[0] == READ_WORD:
        req = gen.send(f.apply(req))
    assert req[0] == CAS_PARENT_WORD
    f.cas_parent(0, 0, 3)
    with pytest.raises(StopIteration) as stop:
        gen.send(f.apply(req))
    assert not stop.value.value.succeeded


def test_random_index_rank_anchors():
    perm = {"a": 8, "b": 7, "c": 6, "d": 1}
    assert random_index_rank("a", 8, perm) == 3
    assert random_index_rank("b", 8, perm) == 2
    assert random_index_rank("c", 8, perm) == 2
    assert random_index_rank("d", 8, perm) == 0
    with pytest.raises(ValueError):
        random_index_rank("a", 8, {"a": 9})


@given(st.integers(1, 300), st.randoms())
def test_random_index_rank_counts(n, rnd):
    order = list(range(n))
    rnd.shuffle(order)
    ranks = analysis_ranks(order)
    assert ranks == [random_index_rank(x, n, [o + 1 for o in order]) for x in range(n)]
    top = n.bit_length() - 1
    assert max(ranks) == top
    # exactly 2^(top - k + 1) - 1 nodes have rank >= k, which is fewer than 2n / 2^k
    for k in range(1, top + 1):
        count = sum(1 for r in ranks if r >= k)
        assert count == 2 ** (top - k + 1) - 1
        assert count < 2 * n / 2**k
    # ranks increase with position in the linking order
    by_order = [r for _, r in sorted(zip(order, ranks))]
    assert by_order == sorted(by_order)


def test_coin_is_fair_over_seeds():
    heads = 0
    for seed in range(2000):
        ctx = Proc(Forest(4, "rank-rand"), 1, seed)
        heads += ctx.flip()
    assert abs(heads - 1000) < 4 * math.sqrt(500)
