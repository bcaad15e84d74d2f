import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdsu.explore import explore
from cdsu.forest import Forest, InvariantViolation, Linking
from cdsu.ops import FIND, SAME_SET, UNITE, Proc
from cdsu.scenarios import build_binomial_tree, build_path
from cdsu.sim import (
    POLICIES,
    Schedule,
    ScheduleError,
    check_structure,
    lockstep_schedule,
    new_run,
    random_policy,
    replay_trace,
    run_schedule,
    simulate,
)


def chain(n, nodes, linking="index", compaction="naive"):
    f = Forest(n, linking, compaction)
    build_path(Proc(f, 1), nodes)
    return f


def test_naive_find_on_depth_two_chain_takes_three_steps():
    f = chain(3, [0, 1, 2])
    run = new_run(f, {2: [(FIND, 0)]})
    run.run_policy(POLICIES["sequential"](0))
    assert run.steps == 3
    assert run.records[0].answer == 2


def test_dcas_step_changes_both_words():
    f = Forest(2, Linking.RANK_DCAS)
    run = new_run(f, [[(UNITE, 0, 1)]], keep_trace=True)
    while True:
        ev = run.step(1)
        if ev.kind == "dcas":
            break
    assert ev.outcome is True
    assert f.parent[0] == 1 and f.rank(1) == 1


def replay(schedule, seed=3):
    f = Forest(6, Linking.RANK_RAND, "two", procs=3)
    programs = {1: [(UNITE, 0, 1), (FIND, 2)], 2: [(UNITE, 1, 2), (SAME_SET, 0, 2)], 3: [(UNITE, 3, 4), (UNITE, 4, 0)]}
    run = new_run(f, programs, seed=seed, keep_trace=True)
    run_schedule(run, schedule)
    return run


def test_replaying_a_schedule_is_deterministic():
    first = simulate(
        Forest(6, Linking.RANK_RAND, "two"),
        {1: [(UNITE, 0, 1), (FIND, 2)], 2: [(UNITE, 1, 2), (SAME_SET, 0, 2)], 3: [(UNITE, 3, 4), (UNITE, 4, 0)]},
        "random",
        seed=3,
        keep_trace=True,
    )
    sched = first.schedule("random")
    a = replay(Schedule.loads(sched.dumps()))
    b = replay(sched)
    assert replay_trace(a) == replay_trace(b) == replay_trace(first)
    assert a.records == b.records == first.records
    assert a.forest.snapshot() == first.forest.snapshot()


def test_round_robin_disjoint_unites():
    f = Forest(4)
    run = simulate(f, [[(UNITE, 0, 1)], [(UNITE, 2, 3)]], "round-robin")
    assert f.snapshot().labels() == [0, 0, 2, 2]
    assert run.taken[:4] == [1, 2, 1, 2]


@pytest.mark.parametrize("linking", list(Linking))
def test_all_interleavings_of_overlapping_unites_merge(linking):
    res = explore(lambda: Forest(3, linking, "two"), [[(UNITE, 0, 1)], [(UNITE, 1, 2)]])
    assert res.ok
    assert res.partitions == {(0, 0, 0)}


@pytest.mark.parametrize("p", [1, 2, 5])
def test_lockstep_finds_pay_chain_length_each(p):
    f = chain(8, list(range(8)))
    run, sched = lockstep_schedule(list(range(1, p + 1)), [(FIND, 0)], f)
    assert sum(r.visits for r in run.records) == 8 * p
    assert len(sched.steps) == 8 * p


def test_single_process_lockstep_is_sequential():
    prog = [(UNITE, 0, 1), (UNITE, 2, 3), (UNITE, 1, 3), (FIND, 0)]
    a, _ = lockstep_schedule([1], prog, Forest(4, "rank-dcas", "two"))
    b = simulate(Forest(4, "rank-dcas", "two"), [prog], "sequential")
    assert a.taken == b.taken
    assert a.records == b.records


@pytest.mark.parametrize("h", [1, 3, 5])
def test_shadowed_finds_each_see_full_height(h):
    f = Forest(2**h, Linking.RANK_DCAS, "naive")
    build_binomial_tree(Proc(f, 1), 2**h)
    deep = max(range(2**h), key=f.depth)
    assert f.depth(deep) == h
    run, _ = lockstep_schedule([2, 3, 4], [(FIND, deep)], f)
    assert [r.visits for r in run.records] == [h + 1] * 3


def test_shadowed_two_try_finds_gain_nothing_from_each_other():
    # two-try splitting advances two levels per visit, alone or shadowed
    f = Forest(64, Linking.RANK_DCAS, "two")
    build_binomial_tree(Proc(f, 1), 64)
    deep = max(range(64), key=f.depth)
    run, _ = lockstep_schedule([2, 3, 4], [(FIND, deep)], f)
    assert all(r.visits >= 6 / 2 for r in run.records)
    assert len({r.visits for r in run.records}) == 1


def test_round_robin_by_op_keeps_operations_whole():
    f = Forest(6, "rank-dcas", "one")
    run = simulate(f, [[(UNITE, 0, 1), (UNITE, 2, 3)], [(UNITE, 4, 5)]], "round-robin-op")
    recs = sorted(run.records, key=lambda r: r.invoke)
    for a, b in zip(recs, recs[1:]):
        assert a.response < b.invoke
    assert [r.proc for r in recs] == [1, 2, 1]


def test_schedule_file_roundtrip_and_comments():
    sched = Schedule([1, 2, 2, 1], "hand-made", procs=2, seed=9)
    text = sched.dumps()
    assert text.startswith("procs 2 seed 9\n")
    back = Schedule.loads(text + "# trailing\n\n2  # inline\n")
    assert back.steps == [1, 2, 2, 1, 2]
    assert (back.procs, back.seed) == (2, 9)


@pytest.mark.parametrize(
    "text",
    ["", "# only a comment\n", "procs 2\n1\n", "procs 2 seed 0\nx\n", "procs 2 seed 0\n3\n", "procs 2 seed 0\n0\n"],
)
def test_bad_schedule_files(text):
    with pytest.raises(ScheduleError):
        Schedule.loads(text)


def test_step_errors():
    run = new_run(Forest(2), [[(FIND, 0)]])
    with pytest.raises(ScheduleError, match="unknown process"):
        run.step(2)
    run.step(1)
    with pytest.raises(ScheduleError, match="step 1: process 1 has no work left"):
        run.step(1)
    with pytest.raises(ValueError):
        new_run(Forest(2), {})


def test_policy_may_stop_early():
    run = new_run(Forest(2), [[(FIND, 0), (FIND, 1)]])
    run.run_policy(lambda r: None)
    assert run.steps == 0 and not run.done()
    with pytest.raises(ScheduleError):
        new_run(Forest(2), [[(FIND, 0)]]).run_policy(lambda r: 1, max_steps=0)


def test_structure_check_catches_cycle_and_order():
    f = Forest(3)
    f.parent[:] = [1, 0, 2]
    with pytest.raises(InvariantViolation, match="cycle"):
        check_structure(f)
    f.parent[:] = [0, 0, 2]
    with pytest.raises(InvariantViolation, match="linking order"):
        check_structure(f)


def test_checked_run_rejects_invalid_compaction():
    f = chain(4, [0, 1, 2, 3])
    run = new_run(f, {2: [(FIND, 0)]}, check=True)
    f.cas_parent(0, 1, 0)  # 0 is not a proper ancestor of its old parent 1
    with pytest.raises(InvariantViolation, match="not a proper union-forest ancestor"):
        run.step(2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(Linking)), st.sampled_from(["naive", "one", "two", "cond-two"]))
def test_same_seed_same_run(seed, linking, compaction):
    progs = {1: [(UNITE, 0, 1), (UNITE, 2, 3)], 2: [(UNITE, 1, 2), (FIND, 0)], 3: [(SAME_SET, 0, 3)]}
    a = simulate(Forest(4, linking, compaction), progs, random_policy(seed), seed=seed, keep_trace=True)
    b = simulate(Forest(4, linking, compaction), progs, random_policy(seed), seed=seed, keep_trace=True)
    assert replay_trace(a) == replay_trace(b)
    assert a.forest.snapshot() == b.forest.snapshot()
