"""sup |d/dxi1 K^| for the Ricci-Stein kernel as the scale range [-r, r]^2 grows."""

import argparse

from zyglab.kernels import KernelSpec
from zyglab.operators import rs_derivative_sup


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rmax", type=int, default=5)
    p.add_argument("--per-octave", type=int, default=4)
    args = p.parse_args(argv)
    prev = None
    print(f"{'r':>3} {'sup':>12} {'ratio':>8}  argmax xi")
    for r in range(1, args.rmax + 1):
        s, at = rs_derivative_sup(KernelSpec.ricci_stein((-r, r), (-r, r)), args.per_octave)
        ratio = "" if prev is None else f"{s / prev:8.3f}"
        print(f"{r:>3} {s:12.5g} {ratio:>8}  ({at[0]:.3g}, {at[1]:.3g}, {at[2]:.3g})")
        prev = s


if __name__ == "__main__":
    main()
