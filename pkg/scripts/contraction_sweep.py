"""Spectral radius, row-sum contraction and limit agreement over random networks.

For each size K, draws random stubborn instances, then reports the worst
dominant eigenvalue of Q, the first power at which every row sum of Q^n is
below 1, and the gap between the linear-solve gain and the brute-force
power limit.
"""

import argparse

import numpy as np

from opinion_herding.analysis import row_sum_contraction
from opinion_herding.core import partition_stubborn
from opinion_herding.networks import random_stubborn_instance
from opinion_herding.spectral import consensus_gain, limit_power, spectral_radius


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[3, 5, 10, 20])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--links", choices=("one", "all"), default="one")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'K':>4} {'max lambda':>11} {'max first strict':>17} {'max gain gap':>13}")
    for K in args.sizes:
        lams, firsts, gaps = [], [], []
        for _ in range(args.instances):
            T = random_stubborn_instance(rng, K, args.links)
            p = partition_stubborn(T)
            lams.append(spectral_radius(p.interior).radius)
            firsts.append(row_sum_contraction(p.interior).first_strict_power)
            gaps.append(np.max(np.abs(consensus_gain(p).gain_column - limit_power(T).gain_column)))
        print(f"{K:4d} {max(lams):11.6f} {max(firsts):17d} {max(gaps):13.3e}")


if __name__ == "__main__":
    main()
