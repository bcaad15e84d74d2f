"""Deterministic step-level simulator.

Each process is a :class:`ProcessMachine` holding a queue of set operations.
A step performs exactly one shared-memory access for one process, plus the
local computation that follows it, so an explicit sequence of process ids
fixes the interleaving completely. Replaying the same schedule with the same
seeds reproduces the same trace, records, counters and final forest.

Schedule file format::

    procs <p> seed <s>
    # comments are allowed
    1
    2
    ...

Trace lines: ``<stepIdx> <proc> <kind> <node(s)> <expected> <new> <outcome>``.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from cdsu.forest import (
    CAS_PARENT,
    CAS_PARENT_WORD,
    CAS_STATUS,
    CAS_WORD,
    DCAS_ELINK,
    INSTALL,
    OPCODE_NAMES,
    PROC_SHIFT,
    RANK_MASK,
    RCAS_FLAG,
    READ_DESC,
    READ_STATUS,
    SUCCEEDED,
    FAILED,
    TAG_MASK,
    TAG_SHIFT,
    Forest,
    InvariantViolation,
    Linking,
    word_str,
)
from cdsu.ops import FIND, OPS, SAME_SET, UNITE, OpRecord, Proc

IDLE = "idle"
RUNNING = "running"
DONE = "done"


class ScheduleError(RuntimeError):
    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message if step_index is None else f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class StepEvent:
    index: int
    proc: int
    kind: str
    nodes: tuple
    expected: object
    new: object
    outcome: object

    def line(self) -> str:
        nodes = ",".join(str(x) for x in self.nodes) if self.nodes else "-"
        return f"{self.index} {self.proc} {self.kind} {nodes} {_fmt(self.expected)} {_fmt(self.new)} {_fmt(self.outcome)}"


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value).replace(" ", "")


def describe(req: tuple, outcome) -> tuple[str, tuple, object, object, object]:
    """(kind, nodes, expected, new, outcome) for one request and its result."""
    op = req[0]
    kind = OPCODE_NAMES[op]
    if op == CAS_PARENT:
        return kind, (req[1],), req[2], req[3], outcome
    if op == CAS_WORD:
        return kind, (req[1],), word_str(req[2]), word_str(req[3]), outcome
    if op == CAS_PARENT_WORD:
        return kind, (req[1],), f"({req[2]};{req[3]})", f"({req[4]};{req[5]})", outcome
    if op == DCAS_ELINK:
        return kind, (req[1], req[2]), req[3], req[3] + 1, outcome
    if op == INSTALL:
        return kind, (req[2],), req[2], req[3], outcome
    if op == READ_DESC:
        d = outcome
        return kind, (), None, None, "none" if d is None else f"{d.owner}#{d.seq}"
    if op in (READ_STATUS, CAS_STATUS, RCAS_FLAG) or kind == "write-desc":
        d = req[1]
        nodes = (d.x, d.y)
        if op == CAS_STATUS:
            return kind, nodes, req[2], req[3], outcome
        return kind, nodes, None, None, outcome
    if kind == "read-rank":
        return kind, (req[1],), None, None, word_str(outcome)
    return kind, (req[1],), None, None, outcome


class ProcessMachine:
    """One process: a program of set operations, run one access per step."""

    def __init__(self, ctx: Proc, program: Iterable[tuple]):
        self.ctx = ctx
        self.program = deque(tuple(op) for op in program)
        self.gen = None
        self.req = None
        self.current = None
        self.invoke = 0
        self.visits_at_start = 0
        self.op_index = 0
        self.responses: list = []

    @property
    def pid(self) -> int:
        return self.ctx.pid

    @property
    def status(self) -> str:
        if self.gen is not None:
            return RUNNING
        return IDLE if self.program else DONE

    @property
    def has_work(self) -> bool:
        return self.gen is not None or bool(self.program)

    def start(self) -> None:
        op = self.program.popleft()
        self.current = op
        self.gen = OPS[op[0]](self.ctx, *op[1:])
        self.req = next(self.gen)
        self.visits_at_start = self.ctx.pc.visits
        self.invoke = None
        self.responses = []


@dataclass
class SimRun:
    """A forest, its process machines, and everything observed while stepping them."""

    forest: Forest
    machines: dict[int, ProcessMachine]
    seed: int = 0
    check: bool = False
    keep_trace: bool = False
    records: list[OpRecord] = field(default_factory=list)
    trace: list[StepEvent] = field(default_factory=list)
    taken: list[int] = field(default_factory=list)
    on_step: Callable | None = None

    @property
    def steps(self) -> int:
        return len(self.taken)

    def enabled(self) -> list[int]:
        return [pid for pid, m in self.machines.items() if m.has_work]

    def done(self) -> bool:
        return not any(m.has_work for m in self.machines.values())

    def step(self, pid: int, event: bool = True) -> StepEvent | None:
        """Run one access of ``pid``; the event is built only if asked for, traced or observed."""
        index = len(self.taken)
        m = self.machines.get(pid)
        if m is None:
            raise ScheduleError(f"unknown process {pid}", index)
        if m.gen is None:
            if not m.program:
                raise ScheduleError(f"process {pid} has no work left", index)
            m.start()
        forest = self.forest
        req = m.req
        before = (list(forest.parent), list(forest.word)) if self.check else None
        res = forest.apply(req, m.ctx.pc)
        stamp = m.ctx.pc.stamp
        if m.invoke is None:
            m.invoke = stamp
        m.responses.append(res)
        self.taken.append(pid)
        ev = None
        if event or self.keep_trace or self.on_step is not None:
            ev = StepEvent(index, pid, *describe(req, res))
            if self.keep_trace:
                self.trace.append(ev)
        try:
            m.req = m.gen.send(res)
        except StopIteration as stop:
            self._complete(m, stop.value, stamp, index)
        if self.check:
            check_step(forest, before, index)
        if self.on_step is not None:
            self.on_step(self, ev)
        return ev

    def _complete(self, m: ProcessMachine, value, stamp: int, index: int) -> None:
        answer, lin = value
        op = m.current
        if op[0] == FIND and self.forest.parent[answer] != answer:
            raise InvariantViolation(f"step {index}: find({op[1]}) returned non-root {answer}")
        self.records.append(
            OpRecord(
                op=op[0],
                args=op[1:],
                answer=answer,
                invoke=m.invoke,
                response=stamp,
                lin=lin,
                proc=m.pid,
                visits=m.ctx.pc.visits - m.visits_at_start,
            )
        )
        m.gen = None
        m.req = None
        m.current = None
        m.op_index += 1

    def run(self, schedule: Iterable[int], *, allow_done: bool = False) -> SimRun:
        """Step the given process ids in order. Stops early only if ``allow_done`` and everyone is done."""
        for pid in schedule:
            if allow_done and self.done():
                break
            self.step(pid, False)
        return self

    def run_policy(self, policy: Callable[[SimRun], int | None], max_steps: int = 10**8) -> SimRun:
        """Let ``policy`` pick the next process until all are done (it may return None to stop)."""
        for _ in range(max_steps):
            if self.done():
                return self
            pid = policy(self)
            if pid is None:
                return self
            self.step(pid, False)
        raise ScheduleError(f"no completion within {max_steps} steps")

    def unite_pairs(self) -> list[tuple[int, int]]:
        return [tuple(r.args) for r in self.records if r.op == UNITE]

    def schedule(self, provenance: str = "explicit") -> Schedule:
        return Schedule(list(self.taken), provenance, procs=max(self.machines), seed=self.seed)


def new_run(
    forest: Forest,
    programs: dict[int, Iterable[tuple]] | list[Iterable[tuple]],
    *,
    seed: int = 0,
    flips: dict[int, list[bool]] | None = None,
    check: bool = False,
    keep_trace: bool = False,
) -> SimRun:
    """Build a run; ``programs`` maps process id to its operations (a list means ids 1..p)."""
    if isinstance(programs, list):
        programs = {pid: prog for pid, prog in enumerate(programs, start=1)}
    if not programs:
        raise ValueError("at least one process is required")
    forest.keep_descriptors = forest.keep_descriptors or check
    if check:
        forest.check_validity = True
        forest.shadow = True
    forest.ensure_procs(max(programs))
    machines = {}
    for pid in sorted(programs):
        ctx = Proc(forest, pid, seed, (flips or {}).get(pid))
        machines[pid] = ProcessMachine(ctx, programs[pid])
    return SimRun(forest, machines, seed=seed, check=check, keep_trace=keep_trace)


# -- schedules ----------------------------------------------------------------------


@dataclass
class Schedule:
    steps: list[int]
    provenance: str = "explicit"
    procs: int = 0
    seed: int = 0

    def dumps(self) -> str:
        lines = [f"procs {self.procs} seed {self.seed}", f"# {self.provenance}"]
        lines += [str(pid) for pid in self.steps]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> Schedule:
        header = None
        steps: list[int] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if header is None:
                parts = line.split()
                if len(parts) != 4 or parts[0] != "procs" or parts[2] != "seed":
                    raise ScheduleError(f"line {lineno}: expected 'procs <p> seed <s>'")
                header = (int(parts[1]), int(parts[3]))
                continue
            try:
                pid = int(line)
            except ValueError:
                raise ScheduleError(f"line {lineno}: not a process id: {line!r}") from None
            if not 1 <= pid <= header[0]:
                raise ScheduleError(f"line {lineno}: process {pid} outside 1..{header[0]}")
            steps.append(pid)
        if header is None:
            raise ScheduleError("empty schedule file")
        return cls(steps, "file", procs=header[0], seed=header[1])


def round_robin(run: SimRun) -> int | None:
    """Next enabled process after the one that moved last."""
    enabled = run.enabled()
    if not enabled:
        return None
    last = run.taken[-1] if run.taken else 0
    for pid in enabled:
        if pid > last:
            return pid
    return enabled[0]


def lockstep(run: SimRun) -> int | None:
    """One step of every process per round, in id order (processes shadow each other)."""
    return round_robin(run)


def round_robin_by_op(run: SimRun) -> int | None:
    """Whole operations in turn: a process keeps the floor until its current operation completes."""
    if run.taken:
        m = run.machines[run.taken[-1]]
        if m.gen is not None:
            return m.pid
    enabled = run.enabled()
    if not enabled:
        return None
    ops_done = {pid: run.machines[pid].op_index for pid in enabled}
    return min(enabled, key=lambda pid: (ops_done[pid], pid))


def random_policy(seed: int) -> Callable[[SimRun], int | None]:
    rng = random.Random(seed)

    def policy(run: SimRun) -> int | None:
        enabled = run.enabled()
        return rng.choice(enabled) if enabled else None

    return policy


def sequential(run: SimRun) -> int | None:
    """Each process runs its whole program before the next starts."""
    enabled = run.enabled()
    return enabled[0] if enabled else None


POLICIES = {
    "round-robin": lambda seed: round_robin,
    "lock-step": lambda seed: lockstep,
    "round-robin-op": lambda seed: round_robin_by_op,
    "sequential": lambda seed: sequential,
    "random": random_policy,
}


def lockstep_schedule(procs: list[int], program: list[tuple], forest: Forest, **kw) -> tuple[SimRun, Schedule]:
    """Run ``program`` on every process in lock-step and return the run and the realized schedule."""
    if not procs:
        raise ValueError("lock-step needs at least one process")
    run = new_run(forest, {pid: list(program) for pid in procs}, **kw)
    run.run_policy(lockstep)
    return run, run.schedule("lock-step")


def run_schedule(run: SimRun, schedule: Schedule | Iterable[int]) -> SimRun:
    steps = schedule.steps if isinstance(schedule, Schedule) else schedule
    return run.run(steps)


# -- structural checks ------------------------------------------------------------------


def check_structure(forest: Forest, where: str = "") -> None:
    """Acyclicity, the linking-order invariant, and claim/descriptor agreement."""
    parent, word, n = forest.parent, forest.word, forest.n
    prefix = f"{where}: " if where else ""
    state = [0] * n  # 0 unknown, 1 on current path, 2 reaches a root
    for x in range(n):
        path = []
        y = x
        while state[y] == 0 and parent[y] != y:
            state[y] = 1
            path.append(y)
            y = parent[y]
            if state[y] == 1:
                raise InvariantViolation(f"{prefix}cycle through node {y}")
        for z in path:
            state[z] = 2
        state[y] = 2
    linking = forest.linking
    for x in range(n):
        p = parent[x]
        wx = word[x]
        if p == x:
            if wx >> PROC_SHIFT:
                _check_root_claim(forest, x, wx, prefix)
            continue
        if forest.helping and not (wx >> PROC_SHIFT):
            raise InvariantViolation(f"{prefix}non-root {x} is unclaimed")
        rx, rp = wx & RANK_MASK, word[p] & RANK_MASK
        if linking is Linking.INDEX:
            if not forest.less(x, p):
                raise InvariantViolation(f"{prefix}parent {p} of {x} is not larger in the linking order")
        elif linking is Linking.RANK_DCAS:
            if rp > rx:
                continue
            if rp == rx and _pending_equal_link(forest, x, p):
                continue
            raise InvariantViolation(f"{prefix}parent {p} (rank {rp}) of {x} (rank {rx}) does not have larger rank")
        else:
            if rp > rx or (rp == rx and forest.less(x, p)):
                continue
            raise InvariantViolation(f"{prefix}parent {p} of {x} is not larger in (rank, order)")


def _pending_equal_link(forest: Forest, x: int, p: int) -> bool:
    """x became a child of equal-rank p through a descriptor whose rank bump of p is still pending."""
    wp = forest.word[p]
    owner = (wp >> PROC_SHIFT) & 0xFFFF
    if not owner or forest.parent[p] != p:
        return False
    d = forest.slots[owner]
    return (
        d is not None
        and not d.randomized
        and d.equal
        and d.tag == wp >> TAG_SHIFT
        and d.x == x
        and d.y == p
        and d.status == SUCCEEDED
    )


def _check_root_claim(forest: Forest, x: int, wx: int, prefix: str) -> None:
    owner = (wx >> PROC_SHIFT) & 0xFFFF
    tag = wx >> TAG_SHIFT
    d = forest.slots[owner] if owner < len(forest.slots) else None
    if d is not None and d.tag == tag:
        if x not in d.targets():
            raise InvariantViolation(f"{prefix}claim on root {x} by process {owner} does not match its descriptor")
        return
    # A leftover claim from a helper that acted on an already-failed equal-rank descriptor.
    for old in reversed(forest.descriptors):
        if old.owner == owner and (old.seq & TAG_MASK) == tag:
            if old.equal and old.status == FAILED and x in old.targets():
                return
            break
    raise InvariantViolation(f"{prefix}claim on root {x} by process {owner} has no live descriptor")


def check_step(forest: Forest, before, index: int) -> None:
    where = f"step {index}"
    old_parent, old_word = before
    for x in range(forest.n):
        if old_word[x] != forest.word[x]:
            if (forest.word[x] & RANK_MASK) < (old_word[x] & RANK_MASK):
                raise InvariantViolation(f"{where}: rank of {x} decreased")
            if old_parent[x] != x or forest.parent[x] != x:
                raise InvariantViolation(f"{where}: rank word of non-root {x} changed")
    if forest.violations:
        raise InvariantViolation(f"{where}: {forest.violations[0]}")
    check_structure(forest, where)


def replay_trace(run: SimRun) -> list[str]:
    return [e.line() for e in run.trace]


def simulate(
    forest: Forest,
    programs,
    policy: str | Callable = "round-robin",
    *,
    seed: int = 0,
    check: bool = False,
    keep_trace: bool = False,
    flips=None,
) -> SimRun:
    """Build a run and drive it to completion with a named or custom policy."""
    run = new_run(forest, programs, seed=seed, check=check, keep_trace=keep_trace, flips=flips)
    if isinstance(policy, str):
        policy = POLICIES[policy](seed)
    return run.run_policy(policy)


__all__ = [
    "FIND",
    "UNITE",
    "SAME_SET",
    "ProcessMachine",
    "Schedule",
    "ScheduleError",
    "SimRun",
    "StepEvent",
    "check_structure",
    "lockstep_schedule",
    "new_run",
    "random_policy",
    "round_robin",
    "run_schedule",
    "simulate",
]
