"""Command line: ``cdsu bench|sim|scenario|verify``.

Exit status is 0 on success, 1 when a verification check fails and 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import math
import random
import sys
from pathlib import Path

from cdsu.bench import (
    PAIR_DISTRIBUTIONS,
    ForestConfig,
    WorkloadFileError,
    WorkloadSpec,
    emit_csv,
    parse_mix,
    parse_workload,
    run_sim,
    run_threads,
)
from cdsu.forest import Compaction, Linking
from cdsu.ops import FIND, SAME_SET, UNITE, Proc
from cdsu.scenarios import (
    SCENARIOS,
    build_binomial_tree,
    build_random_index_tree,
    scenario_interference,
    scenario_log_lowerbound,
    scenario_sqrt_p_path,
    scenario_wakeup,
    split_path,
)
from cdsu.sim import POLICIES, ScheduleError, simulate
from cdsu.verify import check_partition, replay_linearization

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

LINKS = [x.value for x in Linking]
FINDS = [x.value for x in Compaction]


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, n=1024, m=None, procs=4) -> None:
    p.add_argument("--n", type=int, default=n, help="number of nodes")
    p.add_argument("--m", type=int, default=m, help="number of operations (default 4n)")
    p.add_argument("--p", type=int, help=f"number of processes (default {procs}; a workload file sets its own)")
    p.set_defaults(default_p=procs)
    p.add_argument("--link", choices=LINKS, default=Linking.RANK_DCAS.value)
    p.add_argument("--find", choices=FINDS, default=Compaction.TWO_TRY.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-helping", action="store_true", help="rank linking with native two-field CAS/DCAS instead of helping")
    p.add_argument("--rand-cas-flag", action="store_true", help="randomized linking: helpers resolve the flag with a randomized CAS")
    p.add_argument("--random-index", action="store_true", help="linking by index over a seeded random order")


def _workload_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mix", default="1:1:0", help="unite:find:same-set weights")
    p.add_argument("--pairs", choices=PAIR_DISTRIBUTIONS, default="uniform")
    p.add_argument("--workload", help="workload file (U x y | F x | S x y lines, optional @proc prefix)")
    p.add_argument("--csv", help="write a CSV report here")
    p.add_argument("--append", action="store_true", help="append to the CSV instead of overwriting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdsu", description="Concurrent disjoint set union: benchmarks, simulation and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a workload on threads")
    _common(b)
    _workload_args(b)
    b.add_argument("--verify", action="store_true", help="log operations and replay them, plus partition and structure checks")
    b.add_argument("--switch-interval", type=float, help="interpreter thread switch interval in seconds")

    s = sub.add_parser("sim", help="run a workload under the step-level simulator (always verified)")
    _common(s, n=64, procs=4)
    _workload_args(s)
    s.add_argument("--schedule", default="round-robin", help=f"policy ({', '.join(POLICIES)}) or schedule file")
    s.add_argument("--save-schedule", help="write the realized schedule to this file")
    s.add_argument("--trace", action="store_true", help="print one line per step")

    c = sub.add_parser("scenario", help="run a scripted construction or adversarial scenario")
    c.add_argument("--scenario", choices=SCENARIOS, required=True)
    _common(c, n=4096, procs=64)
    c.add_argument("--k", type=int, help="wake-up processes (default 8), tree size (default 1024) or path length (default 12)")
    c.add_argument("--runs", type=int, default=1, help="seeds to run (wake-up, random-index-tree)")
    c.add_argument("--no-adversary", action="store_true", help="sqrt-p-path: schedule without looking at the order")
    c.add_argument("--schedule", default="random", help="wake-up schedule policy")
    c.add_argument("--verify", action="store_true", help="accepted for symmetry; scenarios always check their properties")

    v = sub.add_parser("verify", help="random simulated histories checked against the sequential sets")
    _common(v, n=16, m=None, procs=4)
    v.add_argument("--runs", type=int, default=200)
    v.add_argument("--ops", type=int, default=6, help="operations per process")
    v.add_argument("--all", action="store_true", help="every linking x find combination instead of --link/--find")
    v.add_argument("--verify", action="store_true", help="accepted for symmetry; this command always verifies")
    return parser


def _config(args) -> ForestConfig:
    return ForestConfig(args.link, args.find, helping=not args.no_helping, rand_cas_flag=args.rand_cas_flag, random_order=args.random_index)


def _spec(args) -> tuple[WorkloadSpec, list | None]:
    workload = None
    p = args.p
    if getattr(args, "workload", None):
        try:
            workload = parse_workload(Path(args.workload).read_text(), p if args.p_given else None)
        except OSError as exc:
            raise UsageError(f"cannot read workload: {exc}") from exc
        p = len(workload)
    m = args.m if args.m is not None else 4 * args.n
    if workload is not None:
        m = sum(len(ops) for ops in workload)
    return WorkloadSpec(args.n, m, p, parse_mix(args.mix), args.pairs, args.seed), workload


def _print_report(r, out) -> None:
    ratio = "-" if r.ratio is None else f"{r.ratio:.4f}"
    print(
        f"{r.mode}: n={r.n} m={r.m} p={r.p} link={r.link} find={r.find} seed={r.seed} "
        f"visits={r.total_visits} cas={r.total_cas} cas_failures={r.cas_failures} max_rank={r.max_rank} "
        f"max_op_visits={r.max_op_visits} wall_ms={r.wall_ms:.1f} ratio={ratio}",
        file=out,
    )
    for name, ok in r.checks.items():
        print(f"  check {name}: {'pass' if ok else 'FAIL'}", file=out)
    for problem in r.problems:
        print(f"  problem: {problem}", file=out)


def cmd_bench(args, out) -> int:
    spec, workload = _spec(args)
    report = run_threads(spec, _config(args), workload=workload, verify=args.verify, switch_interval=args.switch_interval)
    _print_report(report, out)
    if args.csv:
        emit_csv([report], args.csv, append=args.append)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_sim(args, out) -> int:
    spec, workload = _spec(args)
    if args.schedule not in POLICIES and not Path(args.schedule).exists():
        raise UsageError(f"--schedule must be one of {', '.join(POLICIES)} or an existing file")
    report = run_sim(spec, _config(args), args.schedule, workload=workload, keep_trace=args.trace)
    if args.trace:
        for line in report.trace_lines:
            print(line, file=out)
    _print_report(report, out)
    if args.save_schedule:
        Path(args.save_schedule).write_text(report.schedule.dumps())
    if args.csv:
        emit_csv([report], args.csv, append=args.append)
    return EXIT_OK if report.ok else EXIT_FAIL


SCENARIO_K = {"wakeup": 8, "binomial-tree": 1024, "random-index-tree": 1024, "path-split": 12}


def cmd_scenario(args, out) -> int:
    name = args.scenario
    if args.k is None:
        args.k = SCENARIO_K.get(name, 8)
    ok = True
    if name == "wakeup":
        config = _config(args)
        bad = 0
        for seed in range(args.seed, args.seed + args.runs):
            res = scenario_wakeup(args.k, config, schedule=args.schedule, seed=seed)
            answers = " ".join(f"q{pid}={'T' if a else 'F'}" for pid, a in sorted(res.answers.items()))
            print(f"seed {seed}: {answers} | at-least-one-true={res.at_least_one_true} true-only-after-all-stepped={res.true_only_after_all_stepped}", file=out)
            bad += not res.ok
        ok = bad == 0
    elif name == "sqrt-p-path":
        adversary = not args.no_adversary
        r = scenario_sqrt_p_path(args.p, args.n, adversary=adversary, compaction=args.find, seed=args.seed)
        print(
            f"p={r.p} side={r.side} groups={r.groups} adversary={r.adversary} mean_depth={r.mean_depth:.3f} "
            f"max_depth={r.max_depth} mean_find_visits={r.mean_find_visits:.3f} paths={r.paths_formed}",
            file=out,
        )
        ok = r.mean_depth >= math.sqrt(args.p) / 4 if adversary else r.mean_depth <= 4 * math.log2(args.p)
    elif name == "log-lowerbound":
        m = args.m if args.m is not None else args.p * args.n // 64
        r = scenario_log_lowerbound(args.n, args.p, m, _config(args), seed=args.seed)
        ratio = "-" if r.ratio is None else f"{r.ratio:.4f}"
        print(
            f"n={r.n} p={r.p} m={r.m} groups={r.groups} group_size={r.group_size} find_visits={r.find_visits} "
            f"bound={r.bound:.1f} ratio={ratio} per_find={r.per_find:.3f}",
            file=out,
        )
        ok = r.ratio is None or r.ratio >= 0.5
    elif name == "binomial-tree":
        config = _config(args)
        forest = config.build(args.k, 1, args.seed)
        root = build_binomial_tree(Proc(forest, 1, args.seed), args.k)
        height = forest.snapshot().height()
        print(f"k={args.k} root={root} rank={forest.rank(root)} height={height}", file=out)
        ok = height >= int(math.log2(args.k))
    elif name == "random-index-tree":
        depths = []
        for seed in range(args.seed, args.seed + args.runs):
            config = ForestConfig(Linking.INDEX, args.find, random_order=True)
            forest = config.build(args.k, 1, seed)
            t = build_random_index_tree(Proc(forest, 1, seed), args.k, seed=seed)
            depths.append(t.mean_depth)
            print(f"seed {seed}: root={t.root} mean_depth={t.mean_depth:.3f} rounds={len(t.rounds) - 1}", file=out)
        print(f"mean over {len(depths)} runs: {sum(depths) / len(depths):.3f}", file=out)
    elif name == "interference":
        r = scenario_interference(args.find if args.find in ("one", "two", "cond-two") else "one")
        print(f"parent of a = {r.parent_of_a}; CAS outcomes per process: {r.cas_outcomes}", file=out)
        ok = r.parent_of_a == 2 and r.cas_outcomes[2][:1] == [False]
    elif name == "path-split":
        first, second = split_path(args.find, args.k)
        print(f"chain from 1: {first}\nchain from 2: {second}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def random_program(rng: random.Random, n: int, ops: int) -> list[tuple]:
    out = []
    for _ in range(ops):
        kind = rng.choice((UNITE, UNITE, FIND, SAME_SET))
        if kind == FIND:
            out.append((FIND, rng.randrange(n)))
        else:
            out.append((kind, rng.randrange(n), rng.randrange(n)))
    return out


def cmd_verify(args, out) -> int:
    combos = [(link, find) for link in LINKS for find in FINDS] if args.all else [(args.link, args.find)]
    failures = 0
    total = 0
    for link, find in combos:
        for seed in range(args.seed, args.seed + args.runs):
            rng = random.Random(f"verify:{link}:{find}:{seed}")
            config = ForestConfig(link, find, helping=not args.no_helping, rand_cas_flag=args.rand_cas_flag, random_order=args.random_index)
            forest = config.build(args.n, args.p, seed)
            programs = [random_program(rng, args.n, args.ops) for _ in range(args.p)]
            run = simulate(forest, programs, "random", seed=seed, check=True)
            part = check_partition(forest.snapshot(), run.unite_pairs())
            rep = replay_linearization(run.records, args.n)
            total += 1
            if not (part.ok and rep.ok):
                failures += 1
                print(f"FAIL link={link} find={find} seed={seed}: {part.detail or rep.reason}", file=out)
    print(f"{total - failures}/{total} histories passed", file=out)
    return EXIT_OK if failures == 0 else EXIT_FAIL


COMMANDS = {"bench": cmd_bench, "sim": cmd_sim, "scenario": cmd_scenario, "verify": cmd_verify}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    args.p_given = args.p is not None
    if not args.p_given:
        args.p = args.default_p
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, ValueError, WorkloadFileError, ScheduleError) as exc:
        print(f"cdsu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"cdsu: verification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
