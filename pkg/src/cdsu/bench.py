"""Workload generation, threaded and simulated runners, and CSV reports.

The primary measurement is work in node visits (find-loop iterations), not
wall time. Wall time is reported but nothing asserts on it.
"""

from __future__ import annotations

import csv
import math
import os
import random
import sys
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from cdsu.ackermann import WorkBoundParams, work_bound
from cdsu.forest import Compaction, Forest, Linking, Snapshot
from cdsu.ops import FIND, OPS, SAME_SET, UNITE, OpRecord, Proc, drive_fast, drive_locked
from cdsu.sim import POLICIES, Schedule, check_structure, new_run
from cdsu.verify import check_partition, replay_linearization

CSV_COLUMNS = ["n", "m", "p", "link", "find", "seed", "mode", "total_visits", "total_cas", "cas_failures", "max_rank", "wall_ms", "ratio"]
PAIR_DISTRIBUTIONS = ("uniform", "biased", "binomial")
DEFAULT_MIX = (0.5, 0.5, 0.0)


@dataclass(frozen=True)
class WorkloadSpec:
    n: int
    m: int
    p: int
    mix: tuple[float, float, float] = DEFAULT_MIX  # unite : find : same-set
    pairs: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 0 or self.p < 1:
            raise ValueError("need n >= 1, m >= 0, p >= 1")
        if len(self.mix) != 3 or any(f < 0 for f in self.mix) or not math.isclose(sum(self.mix), 1.0, abs_tol=1e-9):
            raise ValueError(f"mix fractions must be non-negative and sum to 1, got {self.mix}")
        if self.pairs not in PAIR_DISTRIBUTIONS:
            raise ValueError(f"unknown pair distribution {self.pairs!r}")


def parse_mix(text: str) -> tuple[float, float, float]:
    """'u:f:s' as weights (need not be normalized), e.g. '1:1:0' or '0.6:0.3:0.1'."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"mix must look like u:f:s, got {text!r}")
    weights = [float(x) for x in parts]
    total = sum(weights)
    if total <= 0 or any(w < 0 for w in weights):
        raise ValueError(f"invalid mix {text!r}")
    return tuple(w / total for w in weights)


@dataclass(frozen=True)
class ForestConfig:
    linking: Linking = Linking.RANK_DCAS
    compaction: Compaction = Compaction.TWO_TRY
    helping: bool = True
    rand_cas_flag: bool = False
    random_order: bool = False  # linking by random index: a seeded random total order

    def __post_init__(self):
        object.__setattr__(self, "linking", Linking.parse(self.linking))
        object.__setattr__(self, "compaction", Compaction.parse(self.compaction))

    def build(self, n: int, p: int, seed: int = 0, **kw) -> Forest:
        order = None
        if self.random_order:
            order = list(range(n))
            random.Random(f"order:{seed}").shuffle(order)
        return Forest(
            n,
            self.linking,
            self.compaction,
            helping=self.helping and self.linking is not Linking.INDEX,
            rand_cas_flag=self.rand_cas_flag,
            order=order,
            procs=p,
            **kw,
        )


def binomial_script(k: int) -> list[tuple[int, int]]:
    """Unite pairs that build one binomial tree over nodes 0..k-1.

    Round j unites the roots of adjacent blocks of 2^j nodes; with rank
    linking the root of a block is its last node. Nodes beyond the largest
    power of two are then united with that tree's root.
    """
    pairs = []
    top = 1 << (k.bit_length() - 1) if k else 0
    size = 1
    while size < top:
        for i in range(0, top, 2 * size):
            pairs.append((i + size - 1, i + 2 * size - 1))
        size *= 2
    pairs += [(x, top - 1) for x in range(top, k)]
    return pairs


def _unite_pairs(spec: WorkloadSpec, count: int, rng: random.Random) -> list[tuple[int, int]]:
    n = spec.n
    if spec.pairs == "uniform":
        ends = rng.choices(range(n), k=2 * count)
        return list(zip(ends[::2], ends[1::2]))
    if spec.pairs == "biased":
        # Preferential attachment: half the second endpoints are drawn from earlier endpoints,
        # so unites concentrate on the large sets that are already forming.
        seen: list[int] = []
        out = []
        for _ in range(count):
            x = rng.randrange(n)
            y = rng.choice(seen) if seen and rng.random() < 0.5 else rng.randrange(n)
            seen += (x, y)
            out.append((x, y))
        return out
    script = binomial_script(n)
    if not script:
        return [(0, 0)] * count
    return [script[i % len(script)] for i in range(count)]


def generate_workload(spec: WorkloadSpec) -> list[list[tuple]]:
    """Per-process operation lists (index 0 is process 1), dealt round-robin; deterministic per seed.

    Each operation's kind is drawn independently with the mix weights, so
    the fractions hold in expectation; a pure-unite mix keeps the unite
    pairs in generation order (the binomial script relies on this).
    """
    if spec.m < spec.n:
        warnings.warn(f"m = {spec.m} < n = {spec.n}: outside the m >= n regime the bounds assume", stacklevel=2)
    rng = random.Random(f"workload:{spec.seed}")
    kinds = rng.choices((UNITE, FIND, SAME_SET), weights=spec.mix, k=spec.m)
    pairs = iter(_unite_pairs(spec, kinds.count(UNITE), rng))
    nodes = iter(rng.choices(range(spec.n), k=2 * (spec.m - kinds.count(UNITE))))
    ops = []
    for kind in kinds:
        if kind == UNITE:
            ops.append((UNITE, *next(pairs)))
        elif kind == FIND:
            ops.append((FIND, next(nodes)))
        else:
            ops.append((SAME_SET, next(nodes), next(nodes)))
    return [ops[i :: spec.p] for i in range(spec.p)]


# -- workload files -------------------------------------------------------------------------

_KINDS = {"U": (UNITE, 2), "F": (FIND, 1), "S": (SAME_SET, 2)}


class WorkloadFileError(ValueError):
    pass


def parse_workload(text: str, p: int | None = None) -> list[list[tuple]]:
    """Parse 'U x y' / 'F x' / 'S x y' lines, optionally prefixed '@proc'; '#' starts a comment."""
    tagged: list[tuple[int | None, tuple]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        proc = None
        if line[0].startswith("@"):
            try:
                proc = int(line[0][1:])
            except ValueError:
                raise WorkloadFileError(f"line {lineno}: bad process prefix {line[0]!r}") from None
            if proc < 1:
                raise WorkloadFileError(f"line {lineno}: process ids start at 1")
            line = line[1:]
        if not line or line[0] not in _KINDS:
            raise WorkloadFileError(f"line {lineno}: expected U, F or S")
        kind, arity = _KINDS[line[0]]
        if len(line) != arity + 1:
            raise WorkloadFileError(f"line {lineno}: {line[0]} takes {arity} node(s)")
        try:
            args = tuple(int(a) for a in line[1:])
        except ValueError:
            raise WorkloadFileError(f"line {lineno}: node ids must be integers") from None
        tagged.append((proc, (kind, *args)))
    width = max([p or 1] + [proc for proc, _ in tagged if proc is not None])
    per_proc: list[list[tuple]] = [[] for _ in range(width)]
    i = 0
    for proc, op in tagged:
        if proc is None:
            proc = i % width + 1
            i += 1
        per_proc[proc - 1].append(op)
    return per_proc


def dump_workload(per_proc: Sequence[Sequence[tuple]]) -> str:
    letters = {UNITE: "U", FIND: "F", SAME_SET: "S"}
    lines = []
    for pid, ops in enumerate(per_proc, start=1):
        for op in ops:
            lines.append(" ".join([f"@{pid}", letters[op[0]], *map(str, op[1:])]))
    return "\n".join(lines) + "\n"


# -- reports ---------------------------------------------------------------------------------


@dataclass
class RunReport:
    n: int
    m: int
    p: int
    link: str
    find: str
    seed: int
    mode: str
    per_proc_visits: list[int]
    total_visits: int
    total_cas: int
    cas_failures: int
    links: int
    helping: int
    max_rank: int
    max_op_visits: int
    wall_ms: float
    ratio: float | None
    checks: dict[str, bool] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)
    records: list[OpRecord] | None = None
    schedule: Schedule | None = None  # simulated runs: the realized schedule
    trace_lines: list[str] = field(default_factory=list)
    snapshot: Snapshot | None = field(default=None, repr=False)  # final forest

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def row(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "link": self.link,
            "find": self.find,
            "seed": self.seed,
            "mode": self.mode,
            "total_visits": self.total_visits,
            "total_cas": self.total_cas,
            "cas_failures": self.cas_failures,
            "max_rank": self.max_rank,
            "wall_ms": f"{self.wall_ms:.1f}",
            "ratio": "" if self.ratio is None else f"{self.ratio:.6f}",
        }


def bound_ratio(total_visits: int, n: int, m: int, p: int, compaction: Compaction) -> float | None:
    if compaction is Compaction.NAIVE or m == 0:
        return None
    return total_visits / work_bound(WorkBoundParams(n, m, p, compaction))


def _report(forest: Forest, spec: WorkloadSpec, config: ForestConfig, mode: str, wall_ms: float, max_op: int, m: int) -> RunReport:
    c = forest.counters
    visits = [pc.visits for pc in c.per_proc[1:]]
    snap = forest.snapshot()
    return RunReport(
        n=spec.n,
        m=m,
        p=spec.p,
        link=config.linking.value,
        find=config.compaction.value,
        seed=spec.seed,
        mode=mode,
        per_proc_visits=visits,
        total_visits=sum(visits),
        total_cas=c.cas,
        cas_failures=c.cas_failures,
        links=c.links,
        helping=c.helping,
        max_rank=max(snap.ranks),
        max_op_visits=max_op,
        wall_ms=wall_ms,
        ratio=bound_ratio(sum(visits), spec.n, m, spec.p, config.compaction),
        snapshot=snap,
    )


def _verify_final(report: RunReport, forest: Forest, per_proc, records) -> None:
    pairs = [(op[1], op[2]) for ops in per_proc for op in ops if op[0] == UNITE]
    part = check_partition(forest.snapshot(), pairs)
    report.checks["partition"] = part.ok
    if not part.ok:
        report.problems.append(part.detail)
    try:
        check_structure(forest, "final forest")
        report.checks["structure"] = True
    except AssertionError as exc:
        report.checks["structure"] = False
        report.problems.append(str(exc))
    if records is not None:
        rep = replay_linearization(records, forest.n)
        report.checks["linearization"] = rep.ok
        if not rep.ok:
            report.problems.append(rep.reason)


def run_threads(
    spec: WorkloadSpec,
    config: ForestConfig,
    *,
    workload: list[list[tuple]] | None = None,
    verify: bool = False,
    check_final: bool = True,
    switch_interval: float | None = None,
) -> RunReport:
    """Run each process's operations on its own thread; collect counters and optionally verify.

    With ``verify`` every access is made atomic with a global clock tick so
    operations can be logged with linearization stamps and replayed.
    """
    per_proc = workload if workload is not None else generate_workload(spec)
    if len(per_proc) != spec.p:
        raise ValueError(f"workload has {len(per_proc)} processes, spec says {spec.p}")
    for ops in per_proc:
        for op in ops:
            if any(not 0 <= a < spec.n for a in op[1:]):
                raise ValueError(f"operation {op} references a node outside 0..{spec.n - 1}")
    cpus = os.cpu_count() or 1
    if spec.p > cpus:
        warnings.warn(f"{spec.p} threads on {cpus} CPU(s): interleaving comes from preemption only", stacklevel=2)
    forest = config.build(spec.n, spec.p, spec.seed, shadow=verify)
    procs = [Proc(forest, pid, spec.seed) for pid in range(1, spec.p + 1)]
    logs: list[list[OpRecord]] = [[] for _ in procs]
    max_visits = [0] * spec.p
    errors: list[BaseException] = []
    barrier = threading.Barrier(spec.p)
    drive = drive_locked if verify else drive_fast

    def worker(i: int) -> None:
        ctx = procs[i]
        pc = ctx.pc
        log = logs[i]
        best = 0
        try:
            barrier.wait()
            for op in per_proc[i]:
                before = pc.visits
                invoke = forest.clock
                answer, lin = drive(forest, OPS[op[0]](ctx, *op[1:]), pc)
                used = pc.visits - before
                if used > best:
                    best = used
                if verify:
                    log.append(OpRecord(op[0], op[1:], answer, invoke, pc.stamp, lin, ctx.pid, used))
        except BaseException as exc:  # surfaced in the caller
            errors.append(exc)
            barrier.abort()
        max_visits[i] = best

    old_interval = sys.getswitchinterval()
    if switch_interval is not None:
        sys.setswitchinterval(switch_interval)
    try:
        threads = [threading.Thread(target=worker, args=(i,), name=f"cdsu-{i + 1}") for i in range(spec.p)]
        start = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        wall = (time.perf_counter() - start) * 1000
    finally:
        sys.setswitchinterval(old_interval)
    if errors:
        raise errors[0]
    m = sum(len(ops) for ops in per_proc)
    report = _report(forest, spec, config, "threads", wall, max(max_visits), m)
    if verify or check_final:
        records = [r for log in logs for r in log] if verify else None
        _verify_final(report, forest, per_proc, records)
        if verify:
            report.records = records
    return report


def run_sim(
    spec: WorkloadSpec,
    config: ForestConfig,
    schedule: str = "round-robin",
    *,
    workload: list[list[tuple]] | None = None,
    check_steps: bool | None = None,
    keep_trace: bool = False,
) -> RunReport:
    """Run the workload under the step-level simulator with full verification.

    ``schedule`` is a policy name (round-robin, lock-step, round-robin-op,
    sequential, random) or the path of a schedule file. Per-step structural
    checks are on by default for n <= 256; the final partition, structure and
    linearization checks always run.
    """
    per_proc = workload if workload is not None else generate_workload(spec)
    forest = config.build(spec.n, spec.p, spec.seed, shadow=True, check_validity=True)
    if check_steps is None:
        check_steps = spec.n <= 256
    run = new_run(forest, per_proc, seed=spec.seed, check=check_steps, keep_trace=keep_trace)
    start = time.perf_counter()
    if schedule in POLICIES:
        run.run_policy(POLICIES[schedule](spec.seed))
    else:
        sched = Schedule.loads(Path(schedule).read_text())
        run.run(sched.steps)
    wall = (time.perf_counter() - start) * 1000
    m = len(run.records)
    max_op = max((r.visits for r in run.records), default=0)
    report = _report(forest, spec, config, "sim", wall, max_op, m)
    _verify_final(report, forest, per_proc, run.records)
    report.checks["validity"] = not forest.violations
    report.records = run.records
    report.schedule = run.schedule(schedule if schedule in POLICIES else "file")
    report.trace_lines = [e.line() for e in run.trace]
    return report


def emit_csv(reports: Sequence[RunReport], path: str | os.PathLike, append: bool = False) -> None:
    if not reports:
        raise ValueError("no reports to write")
    path = Path(path)
    exists = path.exists() and path.stat().st_size > 0
    mode = "a" if append else "w"
    with path.open(mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if not (append and exists):
            writer.writeheader()
        for r in reports:
            writer.writerow(r.row())
