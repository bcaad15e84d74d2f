"""Scripted constructions and adversarial scenarios.

Tree builders run on one process with whole operations in sequence. The
concurrent scenarios build step-level runs and drive them with a chosen
schedule: lock-step shadowing for the lower bounds, an index-peeking
adversary for the path construction, random schedules for wake-up.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from cdsu.bench import ForestConfig
from cdsu.forest import Compaction, Forest, Linking
from cdsu.ops import FIND, OPS, UNITE, Proc, call, find_op
from cdsu.sim import POLICIES, SimRun, lockstep, new_run, random_policy, sequential


def _nodes(forest: Forest, k: int, nodes: Sequence[int] | None) -> list[int]:
    nodes = list(range(k)) if nodes is None else list(nodes)
    if k < 1 or k > forest.n or len(nodes) != k:
        raise ValueError(f"need 1 <= k <= n = {forest.n} nodes, got k = {k}")
    return nodes


def _root(ctx: Proc, x: int) -> int:
    return call(ctx, find_op, x)[0]


# -- tree builders -----------------------------------------------------------------------


def build_binomial_tree(ctx: Proc, k: int, nodes: Sequence[int] | None = None) -> int:
    """Unite roots pairwise in lg k rounds, then attach leftovers to the root; returns the root.

    Each round completes before the next begins. Under rank linking every
    round unites two trees of equal rank, so the result for k = 2^j is a
    binomial tree of height j (with naive find, which never compacts).
    """
    forest = ctx.forest
    nodes = _nodes(forest, k, nodes)
    top = 1 << (k.bit_length() - 1)
    roots = nodes[:top]
    while len(roots) > 1:
        merged = []
        for a, b in zip(roots[::2], roots[1::2]):
            call(ctx, OPS[UNITE], a, b)
            merged.append(_root(ctx, b))
        roots = merged
    root = roots[0]
    for x in nodes[top:]:
        call(ctx, OPS[UNITE], x, root)
        root = _root(ctx, root)
    return root


@dataclass
class RandomIndexTree:
    root: int
    rounds: list[list[int]]  # designated nodes at the start of each round, then the final one
    mean_depth: float
    round_depths: list[float]  # mean depth of the participating nodes after each round (first entry: 0)


def build_random_index_tree(ctx: Proc, k: int, nodes: Sequence[int] | None = None, seed: int = 0) -> RandomIndexTree:
    """Combine trees pairwise by uniting their designated nodes, refining designated nodes each round.

    The new designated node of a combined tree is one of the two old ones,
    picked by a coin flip that never looks at the linking order (picking the
    new root instead would leak the order and just rebuild a binomial tree).
    Only the largest power of two not above k takes part in the rounds;
    leftovers are united with the final designated node.
    """
    coin = random.Random(f"designate:{seed}")
    forest = ctx.forest
    nodes = _nodes(forest, k, nodes)
    top = 1 << (k.bit_length() - 1)
    designated = nodes[:top]
    rounds = [list(designated)]
    round_depths = [0.0]
    while len(designated) > 1:
        refined = []
        for a, b in zip(designated[::2], designated[1::2]):
            call(ctx, OPS[UNITE], a, b)
            refined.append(a if coin.getrandbits(1) else b)
        designated = refined
        rounds.append(list(designated))
        round_depths.append(sum(forest.depth(x) for x in nodes[:top]) / top)
    for x in nodes[top:]:
        call(ctx, OPS[UNITE], x, designated[0])
    depths = [forest.depth(x) for x in nodes]
    return RandomIndexTree(forest.root_of(nodes[0]), rounds, sum(depths) / len(depths), round_depths)


def build_path(ctx: Proc, nodes: Sequence[int]) -> None:
    """Link ``nodes`` into one path, first node deepest, by uniting each current root with the next node.

    Needs a linking under which the next node wins: index order increasing
    along ``nodes``, or rank linking (a singleton loses to any rank >= 1,
    and ties go to the second argument).
    """
    for a, b in zip(nodes, nodes[1:]):
        call(ctx, OPS[UNITE], a, b)
    for a, b in zip(nodes, nodes[1:]):
        if ctx.forest.parent[a] != b:
            raise ValueError(f"linking rule did not make {b} the parent of {a}")


# -- uncontended splitting ------------------------------------------------------------------


def split_path(compaction: Compaction | str, length: int = 12) -> tuple[list[int], list[int]]:
    """One find from the bottom of an uncontended path 1..length; returns the chains from nodes 1 and 2.

    Nodes are labelled from 1 as in the usual description of splitting;
    each chain runs to the root.
    """
    forest = Forest(length + 1, Linking.INDEX, compaction)
    ctx = Proc(forest, 1)
    build_path(ctx, list(range(1, length + 1)))
    call(ctx, find_op, 1)

    def chain(x):
        out = [x]
        while forest.parent[x] != x:
            x = forest.parent[x]
            out.append(x)
        return out

    return chain(1), chain(2)


# -- interference on a path -------------------------------------------------------------------

INTERFERENCE_SCHEDULE = [1, 1, 3, 3, 3, 2, 2, 4, 4, 4, 1, 2]


@dataclass
class InterferenceResult:
    run: SimRun
    parent_of_a: int
    cas_outcomes: dict[int, list[bool]]  # per process, the CAS results in order
    a_parent_was_ancestor: bool  # was c an ancestor of a just before process 1's CAS


def scenario_interference(compaction: Compaction | str = Compaction.ONE_TRY) -> InterferenceResult:
    """Four finds from a, a, b, b on the path a-b-c-d-e under linking by index.

    Processes 1 and 2 read a's parent and grandparent; process 3 then moves
    b under d and process 4 moves b under e, with process 2 reading b's
    parent in between. Process 1 then installs c as a's parent although c
    is no longer a's ancestor, and process 2's CAS fails.
    """
    a, b, c, d, e = range(5)
    forest = Forest(5, Linking.INDEX, compaction, check_validity=True)
    build_path(Proc(forest, 1), [a, b, c, d, e])
    run = new_run(forest, [[(FIND, a)], [(FIND, a)], [(FIND, b)], [(FIND, b)]], keep_trace=True)
    run.run(INTERFERENCE_SCHEDULE[:-2])
    ancestor = forest.root_of(a) == e and c in _ancestors(forest, a)
    run.run(INTERFERENCE_SCHEDULE[-2:])
    parent_of_a = forest.parent[a]
    run.run_policy(POLICIES["round-robin"](0))
    outcomes: dict[int, list[bool]] = {pid: [] for pid in run.machines}
    for ev in run.trace:
        if ev.kind == "cas-parent":
            outcomes[ev.proc].append(ev.outcome)
    return InterferenceResult(run, parent_of_a, outcomes, ancestor)


def _ancestors(forest: Forest, x: int) -> list[int]:
    out = []
    while forest.parent[x] != x:
        x = forest.parent[x]
        out.append(x)
    return out


# -- wake-up ------------------------------------------------------------------------------------


@dataclass
class WakeupResult:
    answers: dict[int, bool]
    at_least_one_true: bool
    true_only_after_all_stepped: bool
    run: SimRun

    @property
    def ok(self) -> bool:
        return self.at_least_one_true and self.true_only_after_all_stepped


def wakeup_programs(k: int) -> list[list[tuple]]:
    """Process q_j (j = 1..k): unite(j - 1, j), then find(0) and find(k)."""
    return [[(UNITE, j - 1, j), (FIND, 0), (FIND, k)] for j in range(1, k + 1)]


def scenario_wakeup(
    k: int,
    config: ForestConfig | None = None,
    *,
    schedule="random",
    seed: int = 0,
    n: int | None = None,
    check: bool = False,
) -> WakeupResult:
    """Solve wake-up for k processes with a k + 1 node instance and check both wake-up properties.

    ``schedule`` is a policy name, a policy callable or an explicit list of
    process ids. A process answers true iff its two finds agree. Property
    (ii) is checked against the clock: a true answer's last access must come
    after every process's first access.
    """
    config = config or ForestConfig()
    n = k + 1 if n is None else n
    if k < 1 or k > n - 1:
        raise ValueError(f"wake-up needs 1 <= k <= n - 1, got k = {k}, n = {n}")
    forest = config.build(n, k, seed)
    run = new_run(forest, wakeup_programs(k), seed=seed, check=check)
    if isinstance(schedule, str):
        run.run_policy(POLICIES[schedule](seed))
    elif callable(schedule):
        run.run_policy(schedule)
    else:
        run.run(schedule)
        run.run_policy(sequential)
    finds: dict[int, list] = {pid: [] for pid in run.machines}
    first_step: dict[int, int] = {}
    for r in run.records:
        first_step[r.proc] = min(first_step.get(r.proc, r.invoke), r.invoke)
        if r.op == FIND:
            finds[r.proc].append(r)
    answers = {}
    late_enough = True
    for pid, (fx, fy) in finds.items():
        answers[pid] = fx.answer == fy.answer
        if answers[pid] and any(first_step[q] > fy.response for q in run.machines):
            late_enough = False
    return WakeupResult(answers, any(answers.values()), late_enough, run)


# -- independence: a path of length sqrt(p) ------------------------------------------------------


@dataclass
class SqrtPathReport:
    p: int
    side: int
    groups: int
    adversary: bool
    mean_depth: float
    max_depth: int
    mean_find_visits: float
    total_visits: int
    paths_formed: int


def scenario_sqrt_p_path(
    p: int,
    n: int,
    *,
    adversary: bool = True,
    compaction: Compaction | str = Compaction.TWO_TRY,
    seed: int = 0,
    groups: int | None = None,
) -> SqrtPathReport:
    """Linking by random index, with or without a scheduler that peeks at the order.

    Per group of s = floor(sqrt(p)) nodes: processes 1..p/2 each try one
    unite of a pair of group nodes (every pair is tried), processes
    p/2 + 1..p each find a random group node. The adversary sorts the group
    by the secret order and runs just the unites of consecutive nodes, so
    the group becomes a path, then runs the finds in lock-step, then the
    rest. The independent scheduler fixes the order of the unites before the
    run, from its own coin flips, and never looks at the order. Depth is
    measured on find targets just before the finds start.
    """
    side = math.isqrt(p)
    if side < 2 or side > n:
        raise ValueError(f"need 2 <= floor(sqrt(p)) <= n, got p = {p}, n = {n}")
    half = p // 2
    pairs = list(combinations(range(side), 2))
    if len(pairs) > half:
        raise ValueError("not enough unite processes to try every pair")
    rng = random.Random(f"sqrt-path:{seed}")
    order = list(range(n))
    rng.shuffle(order)
    forest = Forest(n, Linking.INDEX, compaction, order=order, procs=p)
    groups = n // side if groups is None else groups
    depths: list[int] = []
    find_visits: list[int] = []
    paths = 0
    for g in range(groups):
        group = list(range(g * side, (g + 1) * side))
        uniters = {pid: pairs[(pid - 1) % len(pairs)] for pid in range(1, half + 1)}
        programs = {pid: [(UNITE, group[i], group[j])] for pid, (i, j) in uniters.items()}
        targets = {pid: rng.choice(group) for pid in range(half + 1, p + 1)}
        programs.update({pid: [(FIND, x)] for pid, x in targets.items()})
        run = new_run(forest, programs, seed=seed * 1000 + g)
        if adversary:
            ranked = sorted(range(side), key=lambda i: order[group[i]])
            owner = {}
            for pid, pair in uniters.items():
                owner.setdefault(pair, pid)
            # lowest-order node first: each unite hangs the current path under the next node
            first = [owner[tuple(sorted(pair))] for pair in zip(ranked, ranked[1:])]
            for pid in first:
                while run.machines[pid].has_work:
                    run.step(pid, False)
            rest = [pid for pid in uniters if pid not in first]
        else:
            rest = list(uniters)
            rng.shuffle(rest)
            for pid in rest:
                while run.machines[pid].has_work:
                    run.step(pid, False)
            rest = []
        depths += [forest.depth(x) for x in targets.values()]
        if max(forest.depth(x) for x in group) == side - 1:
            paths += 1
        finders = sorted(targets)
        while any(run.machines[pid].has_work for pid in finders):
            for pid in finders:
                if run.machines[pid].has_work:
                    run.step(pid, False)
        for pid in rest:
            while run.machines[pid].has_work:
                run.step(pid, False)
        find_visits += [r.visits for r in run.records if r.op == FIND]
    total = forest.counters.visits
    return SqrtPathReport(
        p=p,
        side=side,
        groups=groups,
        adversary=adversary,
        mean_depth=sum(depths) / len(depths),
        max_depth=max(depths),
        mean_find_visits=sum(find_visits) / len(find_visits),
        total_visits=total,
        paths_formed=paths,
    )


# -- shadowing lower bound -----------------------------------------------------------------------


@dataclass
class LowerBoundReport:
    n: int
    p: int
    m: int
    groups: int
    group_size: int
    find_visits: int
    build_visits: int
    bound: float  # m * lg(np/m + 1)
    per_find: float = 0.0
    targets: list[int] = field(default_factory=list)

    @property
    def ratio(self) -> float | None:
        return self.find_visits / self.bound if self.bound else None


def scenario_log_lowerbound(
    n: int,
    p: int,
    m: int,
    config: ForestConfig | None = None,
    *,
    seed: int = 0,
) -> LowerBoundReport:
    """Deep trees found in lock-step by all p processes at once.

    Nodes are split into m/p groups of np/m nodes; each group is built into
    a binomial tree (rank linking) or a designated-node tree (index
    linking). Every process then runs one find per group on the same target
    (the deepest node, or a random node under index linking), scheduled in
    lock-step so no process gains from another's compaction.
    """
    config = config or ForestConfig(compaction=Compaction.NAIVE)
    if n < 1 or p < 1 or m < 1:
        raise ValueError("n, p and m must be positive")
    bound = m * math.log2(n * p / m + 1)
    forest = config.build(n, p, seed)
    if m >= n * p:
        return LowerBoundReport(n, p, m, 0, 0, 0, 0, bound)
    if m < p:
        raise ValueError(f"need m >= p so every process has a find, got m = {m}, p = {p}")
    groups = m // p
    size = n * p // m
    rng = random.Random(f"lower-bound:{seed}")
    builder = Proc(forest, 1, seed)
    targets = []
    for g in range(groups):
        group = list(range(g * size, (g + 1) * size))
        if config.linking is Linking.INDEX:
            build_random_index_tree(builder, size, group, seed=seed * 7919 + g)
            targets.append(rng.choice(group))
        else:
            build_binomial_tree(builder, size, group)
            targets.append(max(group, key=forest.depth))
    build_visits = forest.counters.visits
    run = new_run(forest, [[(FIND, x) for x in targets] for _ in range(p)], seed=seed)
    run.run_policy(lockstep)
    find_visits = forest.counters.visits - build_visits
    return LowerBoundReport(n, p, m, groups, size, find_visits, build_visits, bound, find_visits / (groups * p), targets)


SCENARIOS = ("wakeup", "sqrt-p-path", "log-lowerbound", "binomial-tree", "random-index-tree", "interference", "path-split")


__all__ = [
    "SCENARIOS",
    "build_binomial_tree",
    "build_path",
    "build_random_index_tree",
    "random_policy",
    "scenario_interference",
    "scenario_log_lowerbound",
    "scenario_sqrt_p_path",
    "scenario_wakeup",
    "split_path",
]
