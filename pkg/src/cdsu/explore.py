"""Exhaustive exploration of every interleaving of a small simulated program.

The explorer walks the tree of schedules depth first. Two prefixes that lead
to the same shared memory and the same local state of every process have the
same futures, so each distinct state is expanded once and the number of
complete interleavings is counted by summing over children. Generators
cannot be copied, so a state other than the current one is rebuilt by
replaying its schedule prefix on a fresh forest.

Every new state is checked for acyclicity, the linking-order invariant and
claim agreement; every transition for rank monotonicity and compaction
validity; every terminal state for partition correctness.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Sequence

from cdsu.forest import Forest, Linking
from cdsu.helping import Descriptor
from cdsu.ops import OPS, UNITE, Proc, call
from cdsu.sim import SimRun, check_structure, new_run
from cdsu.verify import check_partition


class ExplorationLimit(RuntimeError):
    pass


@dataclass
class Exploration:
    states: int = 0
    terminals: int = 0
    interleavings: int = 0
    partitions: set = field(default_factory=set)
    rank_vectors: set = field(default_factory=set)
    failures: list[str] = field(default_factory=list)
    max_depth: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


def _canon(value):
    if isinstance(value, Descriptor):
        return ("desc", value.key(), value.installed is not None)
    return value


def state_key(run: SimRun) -> tuple:
    """Shared memory plus each process's position, current-op responses, descriptor counter and RNG states.

    Only randomized linking draws random bits, so the generator states are
    left out of the key otherwise.
    """
    forest = run.forest
    randomized = forest.linking is Linking.RANK_RAND
    parts = [forest.memory_key()]
    for pid in sorted(run.machines):
        m = run.machines[pid]
        ctx = m.ctx
        local = tuple(_canon(r) for r in m.responses) if m.gen is not None else None
        rng = (hash(ctx.rng.getstate()), hash(ctx.cas_rng.getstate())) if randomized else None
        parts.append((m.op_index, local, ctx.seq, rng))
    return tuple(parts)


def explore(
    make_forest: Callable[[], Forest],
    programs: Sequence[Sequence[tuple]],
    *,
    setup: Sequence[tuple] = (),
    seed: int = 0,
    max_states: int = 2_000_000,
) -> Exploration:
    """Explore all interleavings of ``programs`` (process ids 1..len) after running ``setup`` sequentially.

    ``setup`` operations run to completion on process 1 before the
    concurrent part starts; their unites count towards the expected
    partition.
    """
    programs = [list(p) for p in programs]
    pairs = [(op[1], op[2]) for op in setup if op[0] == UNITE]
    pairs += [(op[1], op[2]) for prog in programs for op in prog if op[0] == UNITE]
    result = Exploration()
    memo: dict[tuple, int] = {}

    def fresh(prefix: Sequence[int]) -> SimRun:
        forest = make_forest()
        forest.keep_descriptors = True
        forest.check_validity = True
        forest.shadow = True
        if setup:
            ctx = Proc(forest, 1, seed)
            for op in setup:
                call(ctx, OPS[op[0]], *op[1:])
        run = new_run(forest, programs, seed=seed, check=False)
        run.run(prefix)
        run.check = True
        return run

    def visit(prefix: list[int], run: SimRun) -> int:
        key = state_key(run)
        known = memo.get(key)
        if known is not None:
            return known
        result.states += 1
        if result.states > max_states:
            raise ExplorationLimit(f"more than {max_states} distinct states")
        result.max_depth = max(result.max_depth, len(prefix))
        try:
            check_structure(run.forest, f"after schedule {prefix}")
        except AssertionError as exc:
            result.failures.append(str(exc))
            memo[key] = 0
            return 0
        enabled = run.enabled()
        if not enabled:
            result.terminals += 1
            snap = run.forest.snapshot()
            labels = tuple(snap.labels())
            result.partitions.add(labels)
            result.rank_vectors.add(snap.ranks)
            part = check_partition(list(labels), pairs)
            if not part.ok:
                result.failures.append(f"schedule {prefix}: {part.detail}")
            memo[key] = 1
            return 1
        total = 0
        for i, pid in enumerate(enabled):
            child = run if i == len(enabled) - 1 else fresh(prefix)
            try:
                child.step(pid, False)
            except AssertionError as exc:
                result.failures.append(f"schedule {prefix + [pid]}: {exc}")
                continue
            total += visit(prefix + [pid], child)
        memo[key] = total
        return total

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 20_000))
    try:
        result.interleavings = visit([], fresh([]))
    finally:
        sys.setrecursionlimit(old_limit)
    return result
