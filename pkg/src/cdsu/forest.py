"""Shared-memory state of a concurrent disjoint-set forest.

Each node owns two words: its parent index and a packed word holding
``rank | proc << 32 | tag << 48``. ``proc`` is the number of a process that
has claimed the node for a helping-based update (0 when unclaimed); ``tag``
is the low 16 bits of that claim's descriptor sequence number, so a helper
can tell a live claim from a stale one.

All mutation goes through compare-and-swap style primitives that run under
one lock, so they are atomic both for real threads and for the step-level
simulator. Plain reads are single list loads.

Algorithms never touch the lists directly. They are generators that yield
*requests* (tuples whose first element is one of the opcodes below) and
receive the result; :meth:`Forest.apply` performs exactly one request.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

RANK_MASK = (1 << 32) - 1
PROC_SHIFT = 32
PROC_MASK = (1 << 16) - 1
TAG_SHIFT = 48
TAG_MASK = (1 << 16) - 1

# Request opcodes. Every request is one shared-memory access.
READ_PARENT = 0  # (READ_PARENT, x)
READ_WORD = 1  # (READ_WORD, x)
CAS_PARENT = 2  # (CAS_PARENT, x, expected, new)
CAS_WORD = 3  # (CAS_WORD, x, expected_word, new_word)
CAS_PARENT_WORD = 4  # (CAS_PARENT_WORD, x, exp_parent, exp_word, new_parent, new_word)
DCAS_ELINK = 5  # (DCAS_ELINK, u, v, r)
READ_DESC = 6  # (READ_DESC, pid)
WRITE_DESC = 7  # (WRITE_DESC, descriptor)
READ_STATUS = 8  # (READ_STATUS, descriptor)
CAS_STATUS = 9  # (CAS_STATUS, descriptor, expected, new)
RCAS_FLAG = 10  # (RCAS_FLAG, descriptor, rng)
INSTALL = 11  # (INSTALL, descriptor, child, new_parent): CAS child.p child -> new_parent

OPCODE_NAMES = (
    "read-parent",
    "read-rank",
    "cas-parent",
    "cas-rank",
    "cas-parent-rank",
    "dcas",
    "read-desc",
    "write-desc",
    "read-status",
    "cas-status",
    "rcas-flag",
    "install",
)
READ_OPCODES = frozenset({READ_PARENT, READ_WORD, READ_DESC, READ_STATUS})

# Descriptor status values.
UNDECIDED = 0
SUCCEEDED = 1
FAILED = 2


class Linking(str, Enum):
    INDEX = "index"
    RANK_DCAS = "rank-dcas"
    RANK_RAND = "rank-rand"

    @classmethod
    def parse(cls, value: Linking | str) -> Linking:
        if isinstance(value, cls):
            return value
        aliases = {"rank-randomized": "rank-rand", "randomized": "rank-rand", "dcas": "rank-dcas"}
        return cls(aliases.get(value, value))


class Compaction(str, Enum):
    NAIVE = "naive"
    ONE_TRY = "one"
    TWO_TRY = "two"
    COND_TWO_TRY = "cond-two"

    @classmethod
    def parse(cls, value: Compaction | str) -> Compaction:
        if isinstance(value, cls):
            return value
        aliases = {
            "none": "naive",
            "one-try": "one",
            "two-try": "two",
            "conditional-two-try": "cond-two",
            "cond-two-try": "cond-two",
        }
        return cls(aliases.get(value, value))


class PackingError(ValueError):
    """A rank, process id or tag does not fit its field of the packed word."""


class InvariantViolation(AssertionError):
    """A structural invariant of the forest was observed to fail."""


def pack(rank: int, proc: int = 0, tag: int = 0) -> int:
    if not 0 <= rank <= RANK_MASK:
        raise PackingError(f"rank {rank} does not fit in 32 bits")
    if not 0 <= proc <= PROC_MASK:
        raise PackingError(f"process id {proc} does not fit in 16 bits")
    if not 0 <= tag <= TAG_MASK:
        raise PackingError(f"tag {tag} does not fit in 16 bits")
    return rank | proc << PROC_SHIFT | tag << TAG_SHIFT


def unpack(word: int) -> tuple[int, int, int]:
    return word & RANK_MASK, (word >> PROC_SHIFT) & PROC_MASK, word >> TAG_SHIFT


def word_str(word: int) -> str:
    rank, proc, tag = unpack(word)
    return f"{rank}/{proc}.{tag}" if proc else str(rank)


@dataclass(slots=True)
class ProcCounters:
    """Work done by one process; only that process writes it.

    ``stamp`` is not a counter: it is the global clock value of the last
    access this process performed, which the algorithms read to record
    linearization points.
    """

    visits: int = 0
    links: int = 0
    cas: int = 0
    cas_failures: int = 0
    helping: int = 0
    stamp: int = 0


@dataclass
class WorkCounters:
    per_proc: list[ProcCounters] = field(default_factory=lambda: [ProcCounters()])

    def __getitem__(self, pid: int) -> ProcCounters:
        return self.per_proc[pid]

    def ensure(self, p: int) -> None:
        while len(self.per_proc) <= p:
            self.per_proc.append(ProcCounters())

    def total(self, name: str) -> int:
        return sum(getattr(c, name) for c in self.per_proc)

    @property
    def visits(self) -> int:
        return self.total("visits")

    @property
    def cas(self) -> int:
        return self.total("cas")

    @property
    def cas_failures(self) -> int:
        return self.total("cas_failures")

    @property
    def links(self) -> int:
        return self.total("links")

    @property
    def helping(self) -> int:
        return self.total("helping")


@dataclass(frozen=True)
class Snapshot:
    parents: tuple[int, ...]
    ranks: tuple[int, ...]

    def to_json(self) -> dict:
        return {"parents": list(self.parents), "ranks": list(self.ranks)}

    @classmethod
    def from_json(cls, data: dict) -> Snapshot:
        return cls(tuple(data["parents"]), tuple(data["ranks"]))

    def root_of(self, x: int) -> int:
        parents = self.parents
        for _ in range(len(parents) + 1):
            px = parents[x]
            if px == x:
                return x
            x = px
        raise InvariantViolation("parent pointers contain a cycle")

    def labels(self) -> list[int]:
        """Canonical partition labels: the minimum node of each tree."""
        roots = [self.root_of(x) for x in range(len(self.parents))]
        least: dict[int, int] = {}
        for x, r in enumerate(roots):
            least.setdefault(r, x)
        return [least[r] for r in roots]

    def depths(self) -> list[int]:
        parents = self.parents
        depth = [-1] * len(parents)
        for x in range(len(parents)):
            path = []
            y = x
            while depth[y] < 0 and parents[y] != y:
                path.append(y)
                y = parents[y]
                if len(path) > len(parents):
                    raise InvariantViolation("parent pointers contain a cycle")
            d = max(depth[y], 0)
            for z in reversed(path):
                d += 1
                depth[z] = d
            if depth[x] < 0:
                depth[x] = 0
        return depth

    def height(self) -> int:
        return max(self.depths(), default=0)


class Forest:
    """A fixed-size array of node cells plus linking/compaction configuration.

    ``order`` gives the total order used by linking by index (a random
    permutation turns it into linking by random index); by default it is the
    node index itself. ``helping`` selects the CAS-only helping realization of
    rank linking; without it, rank linking uses the two-field CAS and DCAS
    primitives, which are atomic here because they run under the forest lock.
    """

    def __init__(
        self,
        n: int,
        linking: Linking | str = Linking.INDEX,
        compaction: Compaction | str = Compaction.NAIVE,
        *,
        helping: bool = False,
        rand_cas_flag: bool = False,
        order: list[int] | None = None,
        procs: int = 1,
        shadow: bool = True,
        check_validity: bool = False,
        keep_descriptors: bool = False,
    ):
        if n < 1:
            raise ValueError(f"invalid forest size {n}")
        pack(n - 1)  # the rank cap must be representable
        if procs > PROC_MASK:
            raise PackingError(f"{procs} processes do not fit the 16-bit process field")
        self.n = n
        self.linking = Linking.parse(linking)
        self.compaction = Compaction.parse(compaction)
        self.helping = helping
        self.rand_cas_flag = rand_cas_flag
        if order is not None and sorted(order) != list(range(n)):
            raise ValueError("order must be a permutation of range(n)")
        self.order = list(order) if order is not None else None
        self.rank_cap = n - 1
        self.parent = list(range(n))
        self.word = [0] * n
        self.shadow = shadow or check_validity
        self.first_parent = [-1] * n
        self.check_validity = check_validity
        self.violations: list[str] = []
        self.slots: list = [None] * (procs + 1)
        self.keep_descriptors = keep_descriptors
        self.descriptors: list = []
        self.counters = WorkCounters()
        self.counters.ensure(procs)
        self.clock = 0
        self.lock = threading.Lock()

    @property
    def procs(self) -> int:
        return len(self.slots) - 1

    def ensure_procs(self, p: int) -> None:
        if p > PROC_MASK:
            raise PackingError(f"{p} processes do not fit the 16-bit process field")
        while len(self.slots) <= p:
            self.slots.append(None)
        self.counters.ensure(p)

    def less(self, u: int, v: int) -> bool:
        """The linking total order."""
        if self.order is None:
            return u < v
        return self.order[u] < self.order[v]

    def rank(self, x: int) -> int:
        return self.word[x] & RANK_MASK

    # -- shadow (union forest) ------------------------------------------------

    def is_proper_ancestor(self, a: int, y: int) -> bool:
        """Whether ``a`` is a proper ancestor of ``y`` in the union forest."""
        fp = self.first_parent
        for _ in range(self.n):
            y = fp[y]
            if y < 0:
                return False
            if y == a:
                return True
        return False

    def _set_parent(self, x: int, expected: int, new: int) -> None:
        # Caller holds the lock and has verified parent[x] == expected.
        if new == expected:
            return
        if expected == x:
            if self.shadow and self.first_parent[x] < 0:
                self.first_parent[x] = new
        elif self.check_validity and not self.is_proper_ancestor(new, expected):
            self.violations.append(
                f"compaction of {x} installed {new}, not a proper union-forest ancestor of {expected}"
            )
        self.parent[x] = new

    # -- atomic primitives -----------------------------------------------------
    # Each primitive advances the global clock and leaves its value in pc.stamp.

    def _tick(self, pc: ProcCounters | None, ok: bool | None) -> None:
        self.clock += 1
        if pc is not None:
            pc.stamp = self.clock
            if ok is not None:
                pc.cas += 1
                if not ok:
                    pc.cas_failures += 1

    def cas_parent(self, x: int, expected: int, new: int, pc: ProcCounters | None = None) -> bool:
        with self.lock:
            ok = self.parent[x] == expected
            if ok:
                self._set_parent(x, expected, new)
            self._tick(pc, ok)
        return ok

    def cas_word(self, x: int, expected: int, new: int, pc: ProcCounters | None = None) -> bool:
        if (new & RANK_MASK) < (expected & RANK_MASK):
            raise InvariantViolation(f"rank of node {x} would decrease")
        with self.lock:
            ok = self.word[x] == expected
            if ok:
                self.word[x] = new
            self._tick(pc, ok)
        return ok

    def cas_rank_process(self, x: int, expected: tuple, new: tuple, pc: ProcCounters | None = None) -> bool:
        """CAS on the packed (rank, proc[, tag]) word of ``x``; all subfields compared and written together."""
        return self.cas_word(x, pack(*expected), pack(*new), pc)

    def cas_parent_word(self, x, exp_parent, exp_word, new_parent, new_word, pc=None) -> bool:
        """Two-field CAS on (x.p, x.r): the single-block CAS of rank linking."""
        if (new_word & RANK_MASK) < (exp_word & RANK_MASK):
            raise InvariantViolation(f"rank of node {x} would decrease")
        with self.lock:
            ok = self.parent[x] == exp_parent and self.word[x] == exp_word
            if ok:
                self._set_parent(x, exp_parent, new_parent)
                self.word[x] = new_word
            self._tick(pc, ok)
        return ok

    def dcas_elink(self, u: int, v: int, r: int, pc: ProcCounters | None = None) -> bool:
        """DCAS making v the parent of u and bumping v to rank r + 1, iff both are roots of rank r."""
        with self.lock:
            parent, word = self.parent, self.word
            ok = parent[u] == u and word[u] == r and parent[v] == v and word[v] == r
            if ok:
                self._set_parent(u, u, v)
                word[v] = r + 1
            self._tick(pc, ok)
        return ok

    def write_desc(self, desc, pc: ProcCounters | None = None) -> None:
        with self.lock:
            self.slots[desc.owner] = desc
            if self.keep_descriptors:
                self.descriptors.append(desc)
            self._tick(pc, None)

    def cas_status(self, desc, expected: int, new: int, pc: ProcCounters | None = None) -> bool:
        with self.lock:
            ok = desc.status == expected
            if ok:
                desc.status = new
            self._tick(pc, ok)
        return ok

    def rcas_flag(self, desc, rng, pc: ProcCounters | None = None) -> bool:
        """Randomized CAS(flag, null, flip): resolve an unset flag with a fair coin and return the flag."""
        with self.lock:
            flag = desc.flag
            won = flag is None
            if won:
                flag = desc.flag = bool(rng.getrandbits(1))
            self._tick(pc, won)
        return flag

    def install(self, desc, x: int, new: int, pc: ProcCounters | None = None) -> bool:
        """CAS(x.p, x, new) on behalf of ``desc``; a success records its clock value on the descriptor."""
        with self.lock:
            ok = self.parent[x] == x
            if ok:
                self._set_parent(x, x, new)
                desc.installed = self.clock + 1
            self._tick(pc, ok)
        return ok

    # -- request dispatch ------------------------------------------------------

    def apply(self, req: tuple, pc: ProcCounters | None = None):
        """Perform one shared-memory access described by ``req``."""
        op = req[0]
        if op == READ_PARENT:
            self._tick(pc, None)
            return self.parent[req[1]]
        if op == READ_WORD:
            self._tick(pc, None)
            return self.word[req[1]]
        if op == CAS_PARENT:
            return self.cas_parent(req[1], req[2], req[3], pc)
        if op == CAS_WORD:
            return self.cas_word(req[1], req[2], req[3], pc)
        if op == CAS_PARENT_WORD:
            return self.cas_parent_word(req[1], req[2], req[3], req[4], req[5], pc)
        if op == DCAS_ELINK:
            return self.dcas_elink(req[1], req[2], req[3], pc)
        if op == INSTALL:
            return self.install(req[1], req[2], req[3], pc)
        if op == READ_DESC:
            self._tick(pc, None)
            return self.slots[req[1]]
        if op == WRITE_DESC:
            return self.write_desc(req[1], pc)
        if op == READ_STATUS:
            self._tick(pc, None)
            return req[1].status
        if op == CAS_STATUS:
            return self.cas_status(req[1], req[2], req[3], pc)
        if op == RCAS_FLAG:
            return self.rcas_flag(req[1], req[2], pc)
        raise ValueError(f"unknown request {req!r}")

    def apply_locked(self, req: tuple, pc: ProcCounters | None = None):
        """Like :meth:`apply`, but reads also take the lock so every access gets a unique clock value."""
        if req[0] in READ_OPCODES:
            with self.lock:
                return self.apply(req, pc)
        return self.apply(req, pc)

    # -- inspection (quiescent callers only) ----------------------------------

    def snapshot(self) -> Snapshot:
        with self.lock:
            return Snapshot(tuple(self.parent), tuple(w & RANK_MASK for w in self.word))

    def root_of(self, x: int) -> int:
        for _ in range(self.n + 1):
            px = self.parent[x]
            if px == x:
                return x
            x = px
        raise InvariantViolation("parent pointers contain a cycle")

    def depth(self, x: int) -> int:
        d = 0
        while self.parent[x] != x:
            x = self.parent[x]
            d += 1
        return d

    def memory_key(self) -> tuple:
        """Hashable image of all shared state, used by the state-space explorer."""
        return (
            tuple(self.parent),
            tuple(self.word),
            tuple(self.first_parent),
            tuple(d.key() if d is not None else None for d in self.slots),
            tuple(d.state() for d in self.descriptors),
        )


def new_forest(n: int, linking: Linking | str = Linking.INDEX, compaction: Compaction | str = Compaction.NAIVE, **kw) -> Forest:
    """A forest of ``n`` singletons: every node its own parent, rank 0, unclaimed."""
    return Forest(n, linking, compaction, **kw)
