"""Threaded work over an (n, p, m) grid under rank linking, one CSV row per run.

    python scripts/work_bound_grid.py --find two naive --csv grid.csv
    python scripts/work_bound_grid.py --n 1024 16384 --p 1 4 16 --mult 1 4

For compacting finds the ratio column is total visits over
m * (alpha(n, d) + lg(1 + 1/d)); for naive finds the script prints total
visits over m * lg n instead.
"""

import argparse
import math
import warnings

from cdsu.bench import ForestConfig, WorkloadSpec, emit_csv, run_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[2**10, 2**14, 2**16])
    ap.add_argument("--p", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    ap.add_argument("--mult", type=int, nargs="+", default=[1, 4, 16], help="m as a multiple of n")
    ap.add_argument("--find", nargs="+", default=["two", "naive"])
    ap.add_argument("--link", default="rank-dcas")
    ap.add_argument("--mix", type=float, nargs=3, default=[0.5, 0.5, 0.0])
    ap.add_argument("--csv")
    args = ap.parse_args()
    warnings.simplefilter("ignore")

    reports = []
    print(f"{'find':>8} {'n':>7} {'p':>3} {'m':>8} {'visits':>10} {'max/op':>6} {'ratio':>7} {'per m lg n':>10}")
    for find in args.find:
        config = ForestConfig(args.link, find)
        for n in args.n:
            for p in args.p:
                for mult in args.mult:
                    m = mult * n
                    rep = run_threads(WorkloadSpec(n, m, p, tuple(args.mix), seed=n + 31 * p + 7 * m), config)
                    reports.append(rep)
                    ratio = "-" if rep.ratio is None else f"{rep.ratio:.3f}"
                    per = rep.total_visits / (m * math.log2(n))
                    print(f"{find:>8} {n:>7} {p:>3} {m:>8} {rep.total_visits:>10} {rep.max_op_visits:>6} {ratio:>7} {per:>10.3f}")
        ratios = [r.ratio for r in reports if r.find == config.compaction.value and r.ratio is not None]
        if ratios:
            print(f"{find}: max ratio {max(ratios):.3f}, min {min(ratios):.3f}")
    if args.csv:
        emit_csv(reports, args.csv)


if __name__ == "__main__":
    main()
