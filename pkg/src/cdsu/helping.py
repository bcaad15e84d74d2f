"""CAS-only rank linking through descriptors and claims.

A process that wants to change a root publishes a descriptor in its slot
and then claims the affected node(s) by CASing its process number (and the
descriptor's tag) into the packed rank word. Anyone who later finds a claim
on a node it wants to update first executes the claimant's descriptor. Every
step of a descriptor is a CAS with a verified expectation, so it takes
effect at most once no matter how many processes run it.

Deterministic linking (``link_helping_det``):

* unequal ranks: claim the lower-rank root x, then install ``z = y.p`` as
  x's parent. Using y's current parent rather than y keeps ranks strictly
  increasing even if y was linked away in the meantime.
* equal ranks: claim both roots, the lower one in the linking order first.
  There is no hardware DCAS, so the second claim is a separate CAS that
  helpers may also perform on the owner's behalf. The descriptor carries a
  status that is decided exactly once: succeeded if the second claim is in
  place, failed otherwise. A failed descriptor releases its claims; a
  succeeded one makes y the parent of x and bumps y's rank, clearing y's
  claim.

Randomized linking (``link_helping_rand``) claims only x. Its flag says
whether to make y the parent of x or to raise x's rank; the announcer sets
it, or in rand-cas-flag mode the first helper resolves it with a randomized
CAS.

Claims on nodes that become children are never cleared: nothing changes a
non-root's rank word again, so an unclaimed node is always a root.
"""

from __future__ import annotations

from cdsu.forest import (
    FAILED,
    INSTALL,
    PROC_SHIFT,
    RANK_MASK,
    RCAS_FLAG,
    READ_DESC,
    READ_PARENT,
    READ_STATUS,
    READ_WORD,
    SUCCEEDED,
    TAG_MASK,
    TAG_SHIFT,
    UNDECIDED,
    CAS_STATUS,
    CAS_WORD,
    WRITE_DESC,
    pack,
)
from cdsu.linking import (
    CAS_PARENT_KIND,
    DCAS_ELINK_KIND,
    RANDOMIZED_PARENT,
    RANDOMIZED_RANK_BUMP,
    LinkOutcome,
    LinkPreconditionError,
)

PARENT_CHANGE = True
RANK_BUMP = False


class Descriptor:
    """One pending update published by process ``owner``.

    Deterministic descriptors use ``equal`` and ``status``; randomized ones
    use ``flag``. ``installed`` is bookkeeping for linearization records (the
    clock value of the successful parent install), not shared state the
    protocol reads.
    """

    __slots__ = ("owner", "seq", "x", "y", "r", "equal", "randomized", "flag", "status", "installed")

    def __init__(self, owner, seq, x, y, r, *, equal=False, randomized=False, flag=None):
        self.owner = owner
        self.seq = seq
        self.x = x
        self.y = y
        self.r = r
        self.equal = equal
        self.randomized = randomized
        self.flag = flag
        self.status = UNDECIDED if equal else SUCCEEDED
        self.installed = None

    @property
    def tag(self) -> int:
        return self.seq & TAG_MASK

    @property
    def claim_word(self) -> int:
        return pack(self.r, self.owner, self.tag)

    def targets(self) -> tuple[int, ...]:
        return (self.x, self.y) if self.equal else (self.x,)

    def key(self) -> tuple:
        return (self.owner, self.seq, self.x, self.y, self.r, self.equal, self.randomized, self.flag, self.status)

    state = key

    def __repr__(self):
        kind = "rand" if self.randomized else ("equal" if self.equal else "unequal")
        return f"Descriptor({self.owner}#{self.seq} {kind} x={self.x} y={self.y} r={self.r} flag={self.flag} status={self.status})"


def claim_proc(word: int) -> int:
    return (word >> PROC_SHIFT) & 0xFFFF


def claim_tag(word: int) -> int:
    return word >> TAG_SHIFT


# -- deterministic --------------------------------------------------------------


def announce_det_link(ctx, x: int, y: int, r: int, equal: bool):
    """Publish a descriptor for linking root x (rank r) under y and claim x.

    Returns the descriptor if the first claim succeeded, else None. For an
    equal-rank link the claim taken here is on the lower of x and y; the
    other claim is attempted by :func:`help_det`.
    """
    ctx.seq += 1
    d = Descriptor(ctx.pid, ctx.seq, x, y, r, equal=equal)
    yield (WRITE_DESC, d)
    first = x
    if equal and not ctx.forest.less(x, y):
        first = y
    ok = yield (CAS_WORD, first, r, d.claim_word)
    return d if ok else None


def help_det(ctx, d: Descriptor, depth: int = 0):
    """Run the remaining steps of a deterministic descriptor; safe to repeat and to race."""
    mine = d.claim_word
    x, y, r = d.x, d.y, d.r
    if d.equal:
        lo, hi = (x, y) if ctx.forest.less(x, y) else (y, x)
        status = yield (READ_STATUS, d)
        if status == UNDECIDED:
            w = yield (READ_WORD, hi)
            if w == r:
                ok = yield (CAS_WORD, hi, r, mine)
                w = mine if ok else (yield (READ_WORD, hi))
            if w != mine and (w >> PROC_SHIFT) and depth < ctx.forest.n:
                # hi is held by someone else: finish their update first, then give up on this one.
                yield from help_claim(ctx, hi, w, depth + 1)
            yield (CAS_STATUS, d, UNDECIDED, SUCCEEDED if w == mine else FAILED)
            status = yield (READ_STATUS, d)
        if status == FAILED:
            yield (CAS_WORD, lo, mine, r)
            yield (CAS_WORD, hi, mine, r)
            return
    z = yield (READ_PARENT, y)
    yield (INSTALL, d, x, z)
    if d.equal:
        py = yield (READ_PARENT, y)
        if py == y:
            yield (CAS_WORD, y, mine, r + 1)


def link_helping_det(ctx, u: int, v: int):
    """Deterministic rank link for CAS-only memory."""
    if u == v:
        raise LinkPreconditionError("cannot link a node to itself")
    ctx.pc.links += 1
    wu = yield (READ_WORD, u)
    if wu >> PROC_SHIFT:
        yield from help_claim(ctx, u, wu)
        return None
    wv = yield (READ_WORD, v)
    if wv >> PROC_SHIFT:
        yield from help_claim(ctx, v, wv)
        return None
    if wu < wv:
        x, y, r, equal = u, v, wu, False
    elif wu > wv:
        x, y, r, equal = v, u, wv, False
    else:
        x, y, r, equal = u, v, wu, True
    d = yield from announce_det_link(ctx, x, y, r, equal)
    kind = DCAS_ELINK_KIND if equal else CAS_PARENT_KIND
    if d is None:
        return LinkOutcome(x, y, kind, False, ctx.pc.stamp)
    yield from help_det(ctx, d)
    if d.installed is not None:
        return LinkOutcome(x, y, kind, True, d.installed)
    return LinkOutcome(x, y, kind, False, ctx.pc.stamp)


# -- randomized -------------------------------------------------------------------


def announce_rand_link(ctx, x: int, y: int, r: int, flag):
    """Publish a randomized descriptor and claim x; returns it if the claim succeeded."""
    ctx.seq += 1
    d = Descriptor(ctx.pid, ctx.seq, x, y, r, randomized=True, flag=flag)
    yield (WRITE_DESC, d)
    ok = yield (CAS_WORD, x, r, d.claim_word)
    return d if ok else None


def randomized_cas_flag(ctx, d: Descriptor):
    """Resolve a null flag with a fair coin (one randomized CAS); returns the settled flag."""
    return (yield (RCAS_FLAG, d, ctx.cas_rng))


def help_rand(ctx, d: Descriptor):
    flag = d.flag
    if flag is None:
        flag = yield from randomized_cas_flag(ctx, d)
    if flag:
        yield (INSTALL, d, d.x, d.y)
    else:
        yield (CAS_WORD, d.x, d.claim_word, d.r + 1)


def link_helping_rand(ctx, u: int, v: int):
    """Randomized rank link for CAS-only memory."""
    if u == v:
        raise LinkPreconditionError("cannot link a node to itself")
    ctx.pc.links += 1
    wu = yield (READ_WORD, u)
    if wu >> PROC_SHIFT:
        yield from help_claim(ctx, u, wu)
        return None
    wv = yield (READ_WORD, v)
    if wv >> PROC_SHIFT:
        yield from help_claim(ctx, v, wv)
        return None
    forest = ctx.forest
    if wu < wv:
        x, y, r, flag = u, v, wu, PARENT_CHANGE
    elif wu > wv:
        x, y, r, flag = v, u, wv, PARENT_CHANGE
    else:
        x, y = (u, v) if forest.less(u, v) else (v, u)
        r = wu
        if r >= forest.rank_cap:
            flag = PARENT_CHANGE
        elif forest.rand_cas_flag:
            flag = None
        else:
            flag = ctx.flip()
    d = yield from announce_rand_link(ctx, x, y, r, flag)
    if d is None:
        kind = RANDOMIZED_PARENT if flag is not False else RANDOMIZED_RANK_BUMP
        return LinkOutcome(x, y, kind, False, ctx.pc.stamp)
    yield from help_rand(ctx, d)
    kind = RANDOMIZED_PARENT if d.flag else RANDOMIZED_RANK_BUMP
    if d.installed is not None:
        return LinkOutcome(x, y, kind, True, d.installed)
    return LinkOutcome(x, y, kind, False, ctx.pc.stamp)


# -- claims -------------------------------------------------------------------------


def help_claim(ctx, node: int, word: int, depth: int = 0):
    """Deal with a claim observed on ``node``: run its descriptor, or drop it if it is dead.

    A claim is live only while its owner's slot still holds the descriptor
    with the claim's tag. A claim whose descriptor is gone can only be left
    over from a helper that claimed on behalf of an update that had already
    failed; it is released if the node is still a root.
    """
    ctx.pc.helping += 1
    owner = (word >> PROC_SHIFT) & 0xFFFF
    d = yield (READ_DESC, owner)
    if d is None or d.tag != (word >> TAG_SHIFT) or node not in d.targets():
        p = yield (READ_PARENT, node)
        if p == node:
            yield (CAS_WORD, node, word, word & RANK_MASK)
        return
    if d.randomized:
        yield from help_rand(ctx, d)
    else:
        yield from help_det(ctx, d, depth)
