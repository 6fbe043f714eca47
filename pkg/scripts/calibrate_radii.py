"""Monte-Carlo calibration of the RGG / TREE+RGG default radii.

Bisects the radius until the mean edge count over ``--seeds`` draws matches
the target count.
"""

import argparse

import numpy as np

from tbgcn.generators import gen_rgg, gen_tree_rgg


def mean_edges(fn, radius, seeds):
    return float(np.mean([fn(radius, s).num_edges for s in range(seeds)]))


def bisect(fn, target, lo, hi, seeds, iters=25):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean_edges(fn, mid, seeds) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=30)
    args = ap.parse_args()
    r_rgg = bisect(lambda r, s: gen_rgg(1000, r, s), 14233, 0.05, 0.4, args.seeds)
    r_tree = bisect(lambda r, s: gen_tree_rgg(1000, 10, r, s), 2407, 0.01, 0.2, args.seeds)
    for name, r, fn in (("rgg", r_rgg, lambda r, s: gen_rgg(1000, r, s)),
                        ("tree_rgg", r_tree, lambda r, s: gen_tree_rgg(1000, 10, r, s))):
        print(f"{name}: radius={r:.4f} mean_edges={mean_edges(fn, round(r, 4), args.seeds):.1f}")


if __name__ == "__main__":
    main()
