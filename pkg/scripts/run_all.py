"""Run every registered experiment and print one status line per run.

    python scripts/run_all.py [--small] [--seed S] [--out DIR]
"""

import argparse
import contextlib
import io
import sys
import time
from pathlib import Path

from zyglab.cli import EXIT_OK, main
from zyglab.experiments import EXPERIMENTS


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--small", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs")
    args = p.parse_args(argv)
    worst = EXIT_OK
    for name in EXPERIMENTS:
        cmd = [name, "--seed", str(args.seed), "--out", str(Path(args.out) / name)]
        if args.small:
            cmd.append("--small")
        t0 = time.perf_counter()
        with contextlib.redirect_stdout(io.StringIO()):
            code = main(cmd)
        status = "PASS" if code == EXIT_OK else f"FAIL (exit {code})"
        print(f"{name:<15} {status:<14} {time.perf_counter() - t0:7.1f} s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run())
