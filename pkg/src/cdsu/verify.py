"""Sequential reference implementation and correctness checkers.

Checks are post-hoc and single-threaded: partition equivalence against the
connected components of the unite pairs, linearization replay of recorded
histories, and statistics over seeded snapshots.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from cdsu.forest import Snapshot
from cdsu.ops import FIND, SAME_SET, UNITE, OpRecord

# -- sequential oracle -----------------------------------------------------------------

SEQ_LINKING = ("rank", "size", "index")
SEQ_COMPACTION = ("none", "compression", "splitting", "two-try-splitting", "halving")


class SequentialDSU:
    """Sequential compressed forest with the textbook linking and compaction rules.

    ``unite`` runs the same loop as the concurrent version (find both,
    link, find both again until equal), so at one process its visit counts
    can be compared with a concurrent run under the same rules. With
    ``linking="rank"`` a tie makes the second root the parent of the first and
    bumps its rank, which is what a successful DCAS elink does.
    """

    def __init__(self, n: int, linking: str = "rank", compaction: str = "compression", order=None):
        if linking not in SEQ_LINKING:
            raise ValueError(f"unknown linking {linking!r}")
        if compaction not in SEQ_COMPACTION:
            raise ValueError(f"unknown compaction {compaction!r}")
        self.n = n
        self.linking = linking
        self.compaction = compaction
        self.order = list(order) if order is not None else list(range(n))
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n
        self.visits = 0

    def find(self, x: int) -> int:
        parent = self.parent
        if self.compaction == "none":
            self.visits += 1
            while parent[x] != x:
                x = parent[x]
                self.visits += 1
            return x
        if self.compaction == "compression":
            root = x
            self.visits += 1
            while parent[root] != root:
                root = parent[root]
                self.visits += 1
            while parent[x] != root and x != root:
                parent[x], x = root, parent[x]
            return root
        if self.compaction == "halving":
            self.visits += 1
            while parent[parent[x]] != parent[x]:
                parent[x] = parent[parent[x]]
                x = parent[x]
                self.visits += 1
            return parent[x]
        if self.compaction == "splitting":
            u = x
            v = parent[u]
            w = parent[v]
            self.visits += 1
            while v != w:
                parent[u] = w
                u = v
                v = parent[u]
                w = parent[v]
                self.visits += 1
            return v
        # two-try splitting run sequentially: every other node jumps to its great-grandparent
        u = x
        v = parent[u]
        w = parent[v]
        self.visits += 1
        while v != w:
            parent[u] = w
            v = parent[u]
            w = parent[v]
            parent[u] = w
            u = v
            v = parent[u]
            w = parent[v]
            self.visits += 1
        return v

    def _link(self, u: int, v: int) -> None:
        if self.linking == "index":
            if self.order[u] < self.order[v]:
                self.parent[u] = v
            else:
                self.parent[v] = u
            return
        if self.linking == "size":
            if self.size[u] > self.size[v] or (self.size[u] == self.size[v] and self.order[u] > self.order[v]):
                u, v = v, u
            self.parent[u] = v
            self.size[v] += self.size[u]
            return
        r, s = self.rank[u], self.rank[v]
        if r < s:
            self.parent[u] = v
        elif r > s:
            self.parent[v] = u
        else:
            self.parent[u] = v
            self.rank[v] += 1

    def unite(self, x: int, y: int) -> None:
        u = self.find(x)
        v = self.find(y)
        while u != v:
            self._link(u, v)
            u = self.find(u)
            v = self.find(v)

    def same_set(self, x: int, y: int) -> bool:
        return self.find(x) == self.find(y)

    def labels(self) -> list[int]:
        return Snapshot(tuple(self.parent), tuple(self.rank)).labels()


@dataclass
class PartitionSummary:
    labels: list[int]

    @classmethod
    def of(cls, snapshot: Snapshot) -> PartitionSummary:
        return cls(snapshot.labels())

    def same(self, x: int, y: int) -> bool:
        return self.labels[x] == self.labels[y]


def oracle_run(n: int, ops: Iterable[tuple], linking: str = "rank", compaction: str = "compression"):
    """Run ops sequentially; returns (answers, PartitionSummary). Unites answer None."""
    dsu = SequentialDSU(n, linking, compaction)
    answers = []
    for op in ops:
        kind = op[0]
        if kind == UNITE:
            dsu.unite(op[1], op[2])
            answers.append(None)
        elif kind == FIND:
            answers.append(dsu.find(op[1]))
        elif kind == SAME_SET:
            answers.append(dsu.same_set(op[1], op[2]))
        else:
            raise ValueError(f"unknown operation {op!r}")
    return answers, PartitionSummary(dsu.labels())


# -- partition checks -------------------------------------------------------------------


def components_bfs(n: int, pairs: Iterable[tuple[int, int]]) -> list[int]:
    """Minimum-node label of each node's connected component in the graph (nodes, pairs)."""
    adj = defaultdict(list)
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    label = [-1] * n
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = s
        queue = deque([s])
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                if label[b] < 0:
                    label[b] = s
                    queue.append(b)
    return label


def components_propagation(n: int, pairs: Iterable[tuple[int, int]]) -> list[int]:
    """Same labels as :func:`components_bfs`, by repeated min-label propagation over the edges."""
    pairs = list(pairs)
    label = list(range(n))
    changed = True
    while changed:
        changed = False
        for a, b in pairs:
            m = min(label[a], label[b])
            if label[a] != m or label[b] != m:
                label[a] = label[b] = m
                changed = True
    return label


@dataclass
class PartitionCheck:
    ok: bool
    witness: tuple[int, int] | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def check_partition(snapshot: Snapshot | Sequence[int], unite_pairs: Iterable[tuple[int, int]]) -> PartitionCheck:
    """Compare the forest's trees with the components of the unite pairs; report a witness pair on mismatch."""
    labels = snapshot.labels() if isinstance(snapshot, Snapshot) else list(snapshot)
    n = len(labels)
    expected = components_bfs(n, unite_pairs)
    first_of_tree: dict[int, int] = {}
    first_of_comp: dict[int, int] = {}
    for x in range(n):
        a = first_of_tree.setdefault(labels[x], x)
        b = first_of_comp.setdefault(expected[x], x)
        if a != b:
            if expected[a] != expected[x]:
                y, detail = a, "share a tree but are not connected by unites"
            else:
                y, detail = b, "are connected by unites but lie in different trees"
            return PartitionCheck(False, (min(x, y), max(x, y)), f"nodes {x} and {y} {detail}")
    return PartitionCheck(True)


# -- linearization replay -----------------------------------------------------------------


class MalformedHistory(ValueError):
    pass


@dataclass
class ReplayResult:
    ok: bool
    index: int | None = None
    record: OpRecord | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


class _Components:
    def __init__(self, n):
        self.parent = list(range(n))
        self.version = [0] * n

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x, y):
        a, b = self.find(x), self.find(y)
        if a != b:
            self.parent[a] = b
            self.version[b] = max(self.version[a], self.version[b]) + 1


def replay_linearization(records: Sequence[OpRecord], n: int) -> ReplayResult:
    """Replay records in linearization order against the abstract sets.

    A find must return a member of its argument's set at its linearization
    point, and all finds linearized while a set is unchanged must agree on
    its representative. A same-set answer must match set membership at its
    linearization point.
    """
    for r in records:
        if r.lin is None or not (r.invoke <= r.lin <= r.response):
            raise MalformedHistory(f"record {r} has linearization point outside its interval")
    ordered = sorted(records, key=lambda r: r.lin)
    for a, b in zip(ordered, ordered[1:]):
        if a.lin == b.lin:
            raise MalformedHistory(f"duplicate linearization stamp {a.lin}")
    comps = _Components(n)
    representative: dict[tuple[int, int], int] = {}
    for i, r in enumerate(ordered):
        if r.op == UNITE:
            comps.union(r.args[0], r.args[1])
        elif r.op == FIND:
            x, a = r.args[0], r.answer
            cx = comps.find(x)
            if comps.find(a) != cx:
                return ReplayResult(False, i, r, f"find({x}) returned {a}, which is not in its set")
            seen = representative.setdefault((cx, comps.version[cx]), a)
            if seen != a:
                return ReplayResult(False, i, r, f"find({x}) returned {a}, but the unchanged set was represented by {seen}")
        elif r.op == SAME_SET:
            x, y = r.args
            truth = comps.find(x) == comps.find(y)
            if truth != r.answer:
                return ReplayResult(False, i, r, f"same-set({x}, {y}) answered {r.answer}, expected {truth}")
        else:
            raise MalformedHistory(f"unknown operation {r.op!r}")
    return ReplayResult(True)


# -- rank statistics -------------------------------------------------------------------------


@dataclass
class RankStats:
    n: int
    k: int
    seeds: int
    mean: float
    std_error: float
    bound: float
    max_rank: int
    max_rank_limit: float
    mean_ok: bool
    max_ok: bool

    @property
    def ok(self) -> bool:
        return self.mean_ok and self.max_ok


def check_rank_stats(snapshots: Sequence[Snapshot], k: int, *, max_rank_factor: float = 4.0, min_seeds: int = 30) -> RankStats:
    """Mean number of nodes with rank >= k against n/2^k (3 standard errors), and max rank against factor * lg n."""
    if len(snapshots) < min_seeds:
        raise ValueError(f"need at least {min_seeds} seeded runs, got {len(snapshots)}")
    n = len(snapshots[0].ranks)
    counts = [sum(1 for r in s.ranks if r >= k) for s in snapshots]
    s = len(counts)
    mean = sum(counts) / s
    var = sum((c - mean) ** 2 for c in counts) / (s - 1)
    se = math.sqrt(var / s)
    bound = n / 2**k
    max_rank = max(max(s.ranks) for s in snapshots)
    limit = max_rank_factor * math.log2(n)
    return RankStats(n, k, s, mean, se, bound, max_rank, limit, mean <= bound + 3 * se, max_rank <= limit)


@dataclass
class RankBoundCheck:
    rank_sum: int
    max_rank: int
    n: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_dcas_rank_bounds(snapshot: Snapshot) -> RankBoundCheck:
    """Rank sum at most n - 1 and maximum rank at most lg n (hard bounds for DCAS rank linking)."""
    n = len(snapshot.ranks)
    total = sum(snapshot.ranks)
    top = max(snapshot.ranks)
    out = RankBoundCheck(total, top, n)
    if total > n - 1:
        out.violations.append(f"rank sum {total} exceeds n - 1 = {n - 1}")
    if top > math.floor(math.log2(n)):
        out.violations.append(f"max rank {top} exceeds lg n")
    return out


def check_strict_rank_order(snapshot: Snapshot) -> list[int]:
    """Non-roots whose parent does not have strictly larger rank."""
    p, r = snapshot.parents, snapshot.ranks
    return [x for x in range(len(p)) if p[x] != x and r[p[x]] <= r[x]]
