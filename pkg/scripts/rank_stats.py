"""Rank distribution after full unite workloads: DCAS rank linking against randomized rank linking.

    python scripts/rank_stats.py --seeds 100
    python scripts/rank_stats.py --n 4096 --k 2 4 6 8

For each k the table shows the mean number of nodes with rank >= k over the
seeds, its standard error and n / 2^k.
"""

import argparse
import warnings

from cdsu.bench import ForestConfig, WorkloadSpec, run_threads
from cdsu.verify import check_dcas_rank_bounds, check_rank_stats


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2**10)
    ap.add_argument("--mult", type=int, default=4, help="unites per node")
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 3, 5, 7, 9])
    ap.add_argument("--find", default="two")
    args = ap.parse_args()
    warnings.simplefilter("ignore")

    for link in ("rank-dcas", "rank-rand"):
        snaps = []
        for seed in range(args.seeds):
            spec = WorkloadSpec(args.n, args.mult * args.n, args.p, (1.0, 0.0, 0.0), seed=seed)
            snaps.append(run_threads(spec, ForestConfig(link, args.find)).snapshot)
        print(f"{link}: {args.seeds} seeds, n={args.n}, max rank {max(max(s.ranks) for s in snaps)}")
        if link == "rank-dcas":
            sums = [check_dcas_rank_bounds(s).rank_sum for s in snaps]
            print(f"  rank sum: max {max(sums)} (n - 1 = {args.n - 1})")
        for k in args.k:
            st = check_rank_stats(snaps, k, min_seeds=1)
            mark = "" if st.mean_ok else "  above"
            print(f"  k={k:>2}: mean {st.mean:9.2f} +- {st.std_error:6.2f}   n/2^k {st.bound:9.2f}{mark}")


if __name__ == "__main__":
    main()
