import math
import random

import pytest

from cdsu.bench import ForestConfig
from cdsu.forest import Compaction, Forest, Linking
from cdsu.ops import Proc
from cdsu.scenarios import (
    build_binomial_tree,
    build_path,
    build_random_index_tree,
    scenario_log_lowerbound,
    scenario_sqrt_p_path,
    scenario_wakeup,
    wakeup_programs,
)
from cdsu.sim import sequential


def binomial(k, compaction="naive"):
    f = Forest(k, Linking.RANK_DCAS, compaction)
    ctx = Proc(f, 1)
    root = build_binomial_tree(ctx, k)
    return f, ctx, root


def test_binomial_tree_of_eight():
    f, _, root = binomial(8)
    assert f.rank(root) == 3
    assert f.snapshot().height() == 3


def test_binomial_tree_small_cases():
    f, ctx, root = binomial(1)
    assert root == 0 and ctx.pc.links == 0
    f, _, _ = binomial(2)
    assert f.snapshot().height() == 1


@pytest.mark.parametrize("k", range(11))
def test_binomial_tree_shape(k):
    f, _, root = binomial(2**k)
    depths = f.snapshot().depths()
    assert max(depths) == k == f.rank(root)
    # a binomial tree has C(k, d) nodes at depth d
    assert [depths.count(d) for d in range(k + 1)] == [math.comb(k, d) for d in range(k + 1)]


def test_binomial_tree_leftovers_join_the_root():
    f, _, root = binomial(11)
    assert len(set(f.snapshot().labels())) == 1
    assert f.rank(root) == 3


def test_build_path_rejects_losing_order():
    f = Forest(3)
    with pytest.raises(ValueError):
        build_path(Proc(f, 1), [2, 1, 0])


def random_index_tree(k, seed, compaction="two"):
    order = list(range(k))
    random.Random(seed).shuffle(order)
    f = Forest(k, Linking.INDEX, compaction, order=order)
    return f, build_random_index_tree(Proc(f, 1), k, seed=seed)


def test_random_index_tree_of_four():
    f, tree = random_index_tree(4, 0)
    assert len(tree.rounds) == 3  # start, after round 1, after round 2
    assert [len(r) for r in tree.rounds] == [4, 2, 1]
    assert len(set(f.snapshot().labels())) == 1


def test_random_index_tree_depth_grows_each_round():
    k, seeds = 64, 200
    growth = [0.0] * 6
    for seed in range(seeds):
        _, tree = random_index_tree(k, seed)
        for r in range(6):
            growth[r] += (tree.round_depths[r + 1] - tree.round_depths[r]) / seeds
    assert all(g >= 0.25 for g in growth), growth


def test_random_index_tree_mean_depth_at_1024():
    depths = [random_index_tree(1024, seed)[1].mean_depth for seed in range(100)]
    assert sum(depths) / len(depths) >= 2


def test_wakeup_programs_shape():
    progs = wakeup_programs(3)
    assert progs[0] == [("unite", 0, 1), ("find", 0), ("find", 3)]
    assert len(progs) == 3


def test_wakeup_sequential_only_last_process_wakes():
    res = scenario_wakeup(3, schedule=sequential)
    assert res.answers == {1: False, 2: False, 3: True}
    assert res.ok


@pytest.mark.parametrize("config", [ForestConfig(), ForestConfig(linking="index", compaction="naive"), ForestConfig(linking="rank-rand", helping=False)])
def test_wakeup_random_schedules(config):
    for seed in range(40):
        res = scenario_wakeup(6, config, seed=seed, check=True)
        assert res.ok, (seed, res.answers)


def test_wakeup_explicit_schedule_and_errors():
    res = scenario_wakeup(2, schedule=[2, 2, 1])
    assert res.ok
    with pytest.raises(ValueError):
        scenario_wakeup(4, n=4)


def test_sqrt_path_adversary_builds_paths():
    res = scenario_sqrt_p_path(16, 64)
    assert res.side == 4
    assert res.max_depth == 3  # a path of 4 nodes
    assert res.paths_formed == res.groups
    assert res.mean_find_visits >= math.sqrt(16) / 4


def test_sqrt_path_independent_scheduler_stays_shallow():
    adv = scenario_sqrt_p_path(64, 1024, seed=1)
    ind = scenario_sqrt_p_path(64, 1024, adversary=False, seed=1)
    assert ind.mean_depth <= 4 * math.log2(64)
    assert ind.mean_depth < adv.mean_depth
    assert ind.paths_formed < adv.paths_formed


def test_sqrt_path_argument_errors():
    with pytest.raises(ValueError):
        scenario_sqrt_p_path(3, 16)
    with pytest.raises(ValueError):
        scenario_sqrt_p_path(16, 3)  # a group of 4 nodes does not fit


def test_lower_bound_groups_of_64():
    rep = scenario_log_lowerbound(2**12, 64, 4096, ForestConfig(compaction="naive"))
    assert rep.group_size == 64 and rep.groups == 64
    assert rep.per_find >= 6
    assert rep.ratio >= 0.5


def test_lower_bound_degenerate_and_invalid():
    rep = scenario_log_lowerbound(16, 4, 64)
    assert rep.groups == 0 and rep.find_visits == 0
    with pytest.raises(ValueError):
        scenario_log_lowerbound(16, 4, 3)


@pytest.mark.parametrize("compaction", list(Compaction))
def test_lower_bound_small_instance(compaction):
    rep = scenario_log_lowerbound(2**8, 16, 256, ForestConfig(compaction=compaction))
    assert rep.find_visits >= 0.5 * rep.bound

