"""Lock-step lower-bound instances and the sqrt(p) path adversary.

    python scripts/lower_bound_scenarios.py
    python scripts/lower_bound_scenarios.py --n 4096 --p 16 64 --m-per-p 4 16 64

The first table compares find work under shadowing schedules with
m * lg(np/m + 1). The second compares mean node depth after concurrent
unites scheduled by the path adversary and by a scheduler that ignores the
node order.
"""

import argparse
import math

from cdsu.bench import ForestConfig
from cdsu.scenarios import scenario_log_lowerbound, scenario_sqrt_p_path


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2**12)
    ap.add_argument("--p", type=int, nargs="+", default=[16, 64])
    ap.add_argument("--m-per-p", type=int, nargs="+", default=[4, 16, 64], help="finds per process")
    ap.add_argument("--find", nargs="+", default=["naive", "one", "two", "cond-two"])
    ap.add_argument("--link", default="rank-dcas")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'find':>8} {'p':>3} {'m':>6} {'group':>6} {'per find':>8} {'bound':>9} {'ratio':>6}")
    for find in args.find:
        for p in args.p:
            for per in args.m_per_p:
                m = p * per
                rep = scenario_log_lowerbound(args.n, p, m, ForestConfig(args.link, find), seed=args.seed)
                ratio = "-" if rep.ratio is None else f"{rep.ratio:.3f}"
                print(f"{find:>8} {p:>3} {m:>6} {rep.group_size:>6} {rep.per_find:>8.2f} {rep.bound:>9.0f} {ratio:>6}")

    print()
    print(f"{'p':>3} {'adversary':>9} {'mean depth':>10} {'max':>4} {'paths':>6} {'sqrt(p)/4':>9} {'4 lg p':>6}")
    for p in args.p:
        for adversary in (True, False):
            r = scenario_sqrt_p_path(p, args.n, adversary=adversary, seed=args.seed)
            print(f"{p:>3} {str(adversary):>9} {r.mean_depth:>10.2f} {r.max_depth:>4} {r.paths_formed:>6} {math.sqrt(p) / 4:>9.2f} {4 * math.log2(p):>6.0f}")


if __name__ == "__main__":
    main()
