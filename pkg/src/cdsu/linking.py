"""Link implementations dispatched by unite.

Every link is a generator over shared-memory requests (see
:mod:`cdsu.forest`) taking a process context ``ctx`` and two roots ``u`` and
``v`` observed by the caller's finds. A link makes at most one attempt; the
retry loop lives in unite. The returned :class:`LinkOutcome` records whether
the attempt changed a parent pointer, but unite only uses that to record a
linearization point, never to decide what to do next.

The rank links here use the two-field CAS and the DCAS primitive directly.
The CAS-only realizations for threads are in :mod:`cdsu.helping`.
"""

from __future__ import annotations

from dataclasses import dataclass

from cdsu.forest import CAS_PARENT, CAS_PARENT_WORD, DCAS_ELINK, READ_WORD

CAS_PARENT_KIND = "cas-parent"
DCAS_ELINK_KIND = "dcas-elink"
RANDOMIZED_PARENT = "randomized-parent"
RANDOMIZED_RANK_BUMP = "randomized-rank-bump"


@dataclass(slots=True)
class LinkOutcome:
    child: int
    parent: int
    kind: str
    succeeded: bool
    stamp: int = 0  # clock value of the access that decided the outcome


class LinkPreconditionError(ValueError):
    pass


def link_by_index(ctx, u: int, v: int):
    """CAS the parent of the smaller node (in the linking order) from itself to the larger."""
    if u == v:
        raise LinkPreconditionError("cannot link a node to itself")
    ctx.pc.links += 1
    if ctx.forest.less(u, v):
        a, b = u, v
    else:
        a, b = v, u
    ok = yield (CAS_PARENT, a, a, b)
    return LinkOutcome(a, b, CAS_PARENT_KIND, ok, ctx.pc.stamp)


def link_by_rank(ctx, u: int, v: int):
    """Generic rank link: CAS the lower-rank root under the other, or elink on a tie."""
    if u == v:
        raise LinkPreconditionError("cannot link a node to itself")
    ctx.pc.links += 1
    r = yield (READ_WORD, u)
    s = yield (READ_WORD, v)
    if r < s:
        ok = yield (CAS_PARENT_WORD, u, u, r, v, r)
        return LinkOutcome(u, v, CAS_PARENT_KIND, ok, ctx.pc.stamp)
    if r > s:
        ok = yield (CAS_PARENT_WORD, v, v, s, u, s)
        return LinkOutcome(v, u, CAS_PARENT_KIND, ok, ctx.pc.stamp)
    return (yield from ctx.elink(ctx, u, v, r))


def elink_dcas(ctx, u: int, v: int, r: int):
    """Make v the parent of u and bump v to rank r + 1 in one DCAS, iff both are still roots of rank r."""
    ok = yield (DCAS_ELINK, u, v, r)
    return LinkOutcome(u, v, DCAS_ELINK_KIND, ok, ctx.pc.stamp)


def elink_randomized(ctx, u: int, v: int, r: int):
    """Equal-rank link decided by a fair coin.

    With (a, b) the pair ordered by the linking order, heads tries to make b
    the parent of a and tails tries to raise a's rank to r + 1; both attempts
    verify that a is still a root of rank r. At the rank cap there is no
    flip and the parent change is always attempted.
    """
    if ctx.forest.less(u, v):
        a, b = u, v
    else:
        a, b = v, u
    heads = True if r >= ctx.forest.rank_cap else ctx.flip()
    if heads:
        ok = yield (CAS_PARENT_WORD, a, a, r, b, r)
        return LinkOutcome(a, b, RANDOMIZED_PARENT, ok, ctx.pc.stamp)
    yield (CAS_PARENT_WORD, a, a, r, a, r + 1)
    return LinkOutcome(a, b, RANDOMIZED_RANK_BUMP, False, ctx.pc.stamp)


def random_index_rank(x: int, n: int, permutation) -> int:
    """Analysis rank of ``x`` under linking by random index.

    ``permutation[x]`` is x's position in 1..n; the rank is
    floor(lg n) - floor(lg(n - position + 1)), so the last node has rank
    floor(lg n) and the first has rank 0. The algorithm never reads it.
    """
    pos = permutation[x]
    if not 1 <= pos <= n:
        raise ValueError(f"position {pos} outside 1..{n}")
    return _floor_lg(n) - _floor_lg(n - pos + 1)


def _floor_lg(k: int) -> int:
    return k.bit_length() - 1


def analysis_ranks(order: list[int]) -> list[int]:
    """Analysis ranks of every node for a 0-based linking order (as stored on a forest)."""
    n = len(order)
    top = _floor_lg(n)
    return [top - _floor_lg(n - o) for o in order]
