"""Find, unite and same-set as step generators, plus the process context and drivers.

Each operation yields one shared-memory request per step and receives its
result, so the same code runs under the step-level simulator (which picks
whose request goes next) and on real threads (each thread drives its own
generators as fast as it can).

Linearization points: a find's is its last read; a unite's is its
successful link, or the last read before the equality test that ends it;
a same-set's is the last read of its second find.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass

from cdsu.forest import (
    CAS_PARENT,
    READ_PARENT,
    READ_WORD,
    Compaction,
    Forest,
    Linking,
)
from cdsu.helping import link_helping_det, link_helping_rand
from cdsu.linking import elink_dcas, elink_randomized, link_by_index, link_by_rank

FIND = "find"
UNITE = "unite"
SAME_SET = "same-set"


def find_naive(ctx, x: int):
    pc = ctx.pc
    u = x
    v = yield (READ_PARENT, u)
    pc.visits += 1
    while v != u:
        u = v
        v = yield (READ_PARENT, u)
        pc.visits += 1
    return u


def find_one_try(ctx, x: int):
    pc = ctx.pc
    u = x
    v = yield (READ_PARENT, u)
    w = yield (READ_PARENT, v)
    pc.visits += 1
    while v != w:
        yield (CAS_PARENT, u, v, w)
        u = v
        v = yield (READ_PARENT, u)
        w = yield (READ_PARENT, v)
        pc.visits += 1
    return v


def find_two_try(ctx, x: int):
    pc = ctx.pc
    u = x
    v = yield (READ_PARENT, u)
    w = yield (READ_PARENT, v)
    pc.visits += 1
    while v != w:
        yield (CAS_PARENT, u, v, w)
        v = yield (READ_PARENT, u)
        w = yield (READ_PARENT, v)
        yield (CAS_PARENT, u, v, w)
        u = v
        v = yield (READ_PARENT, u)
        w = yield (READ_PARENT, v)
        pc.visits += 1
    return v


def find_cond_two_try(ctx, x: int):
    """Two-try splitting where the second try happens only if the first CAS failed."""
    pc = ctx.pc
    u = x
    v = yield (READ_PARENT, u)
    w = yield (READ_PARENT, v)
    pc.visits += 1
    while v != w:
        ok = yield (CAS_PARENT, u, v, w)
        if not ok:
            v = yield (READ_PARENT, u)
            w = yield (READ_PARENT, v)
            yield (CAS_PARENT, u, v, w)
        u = v
        v = yield (READ_PARENT, u)
        w = yield (READ_PARENT, v)
        pc.visits += 1
    return v


FINDS = {
    Compaction.NAIVE: find_naive,
    Compaction.ONE_TRY: find_one_try,
    Compaction.TWO_TRY: find_two_try,
    Compaction.COND_TWO_TRY: find_cond_two_try,
}


def unite(ctx, x: int, y: int):
    """Returns (None, linearization stamp)."""
    find, link = ctx.find, ctx.link
    u = yield from find(ctx, x)
    v = yield from find(ctx, y)
    lin = None
    while u != v:
        out = yield from link(ctx, u, v)
        if out is not None and out.succeeded:
            lin = out.stamp
        u = yield from find(ctx, u)
        v = yield from find(ctx, v)
    if lin is None:
        lin = ctx.pc.stamp
    return None, lin


def same_set(ctx, x: int, y: int):
    """Returns (answer, linearization stamp)."""
    find = ctx.find
    u = yield from find(ctx, x)
    v = yield from find(ctx, y)
    lin = ctx.pc.stamp
    while u != v:
        w = yield (READ_PARENT, u)
        if w == u:
            return False, lin
        u = yield from find(ctx, u)
        v = yield from find(ctx, v)
        lin = ctx.pc.stamp
    return True, lin


def find_op(ctx, x: int):
    """Returns (root, linearization stamp)."""
    root = yield from ctx.find(ctx, x)
    return root, ctx.pc.stamp


OPS = {FIND: find_op, UNITE: unite, SAME_SET: same_set}


def select_link(forest: Forest):
    """(link, elink) generator functions for the forest's configuration."""
    if forest.linking is Linking.INDEX:
        return link_by_index, None
    if forest.helping:
        if forest.linking is Linking.RANK_DCAS:
            return link_helping_det, None
        return link_helping_rand, None
    if forest.linking is Linking.RANK_DCAS:
        return link_by_rank, elink_dcas
    return link_by_rank, elink_randomized


class Proc:
    """Per-process context: identity, counters, private randomness and the configured rules.

    ``flips`` optionally fixes the sequence of coin flips (consumed before
    the seeded generator), for deterministic replay of randomized links.
    """

    __slots__ = ("pid", "forest", "pc", "rng", "cas_rng", "flips", "seq", "find", "link", "elink")

    def __init__(self, forest: Forest, pid: int, seed: int = 0, flips=None):
        if pid < 1:
            raise ValueError("process ids start at 1")
        forest.ensure_procs(pid)
        self.pid = pid
        self.forest = forest
        self.pc = forest.counters[pid]
        self.rng = random.Random(f"flip:{seed}:{pid}")
        self.cas_rng = random.Random(f"rcas:{seed}:{pid}")
        self.flips = deque(flips) if flips else None
        self.seq = 0
        self.find = FINDS[forest.compaction]
        self.link, self.elink = select_link(forest)

    def flip(self) -> bool:
        if self.flips:
            return bool(self.flips.popleft())
        return bool(self.rng.getrandbits(1))


@dataclass
class OpRecord:
    op: str
    args: tuple
    answer: object
    invoke: int
    response: int
    lin: int
    proc: int
    visits: int = 0


# -- drivers --------------------------------------------------------------------


def drive(forest: Forest, gen, pc):
    """Run a generator to completion with every access stamped by the forest clock."""
    apply = forest.apply
    try:
        req = next(gen)
        while True:
            req = gen.send(apply(req, pc))
    except StopIteration as stop:
        return stop.value


def drive_fast(forest: Forest, gen, pc):
    """Run a generator to completion; plain reads skip the lock and the clock (benchmark mode)."""
    parent = forest.parent
    word = forest.word
    apply = forest.apply
    try:
        req = next(gen)
        while True:
            op = req[0]
            if op == READ_PARENT:
                res = parent[req[1]]
            elif op == READ_WORD:
                res = word[req[1]]
            else:
                res = apply(req, pc)
            req = gen.send(res)
    except StopIteration as stop:
        return stop.value


def drive_locked(forest: Forest, gen, pc):
    """Run a generator to completion with every access atomic with its clock tick (verification on threads)."""
    apply = forest.apply_locked
    try:
        req = next(gen)
        while True:
            req = gen.send(apply(req, pc))
    except StopIteration as stop:
        return stop.value


def call(ctx: Proc, genfn, *args):
    """Run one generator-based routine for ``ctx`` to completion (sequential convenience)."""
    return drive(ctx.forest, genfn(ctx, *args), ctx.pc)


class ConcurrentDSU:
    """Blocking facade: each method runs one operation to completion for the given process.

    Safe to call from many threads as long as each thread uses its own
    process id (the model has one operation in flight per process).
    """

    def __init__(
        self,
        n: int,
        linking: Linking | str = Linking.RANK_DCAS,
        compaction: Compaction | str = Compaction.TWO_TRY,
        *,
        procs: int = 1,
        seed: int = 0,
        helping: bool = True,
        verify: bool = False,
        **forest_kw,
    ):
        forest_kw.setdefault("shadow", verify)
        self.forest = Forest(n, linking, compaction, helping=helping, procs=procs, **forest_kw)
        self.procs = [None] + [Proc(self.forest, pid, seed) for pid in range(1, procs + 1)]
        self._drive = drive_locked if verify else drive_fast

    def _run(self, pid, genfn, *args):
        ctx = self.procs[pid]
        return self._drive(self.forest, genfn(ctx, *args), ctx.pc)[0]

    def find(self, x: int, pid: int = 1) -> int:
        return self._run(pid, find_op, x)

    def unite(self, x: int, y: int, pid: int = 1) -> None:
        self._run(pid, unite, x, y)

    def same_set(self, x: int, y: int, pid: int = 1) -> bool:
        return self._run(pid, same_set, x, y)
