"""||T f||_2 / ||f||_2 for the truncated Nagel-Wainger kernel over a grid of
(eps, N) cut-offs, for one band-limited probe.

Rows with equal eps show the outer cut; columns show the inner one.
"""

import argparse

import numpy as np

from zyglab.field_core import Grid3, lp_norm
from zyglab.frames import admissible_pairs, band_limited_random, build_bump_pair
from zyglab.kernels import KernelSpec
from zyglab.operators import apply_T


def main(argv=None):
    p = argparse.ArgumentParser(description="truncation sweep for apply_T")
    p.add_argument("--L", type=float, default=16.0)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    g = Grid3.cube(args.L, args.n)
    h = g.spacing[0]
    bumps = build_bump_pair()
    f = band_limited_random(g, bumps, admissible_pairs(bumps, g), np.random.default_rng(args.seed))
    nf = lp_norm(f, 2)
    eps_list = [2 * h * 2**i for i in range(3)]
    N_list = [args.L / 8, args.L / 4, args.L / 2 - h]
    print("eps \\ N " + "".join(f"{N:>10.3g}" for N in N_list))
    for e in eps_list:
        row = [lp_norm(apply_T(KernelSpec.nagel_wainger(eps=e, N=N), f), 2) / nf for N in N_list]
        print(f"{e:<8.3g}" + "".join(f"{r:>10.4f}" for r in row))


if __name__ == "__main__":
    main()
