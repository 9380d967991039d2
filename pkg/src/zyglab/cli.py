"""Command line entry point.

    zyglab <experiment> [--config PATH] [--small] [--seed S] [--out DIR]
    zyglab list

The optional INI config holds one section named after the experiment; its keys
override the fields of that experiment's config dataclass.  A ``[run]``
section may set ``seed`` and ``out``.  Exit status: 0 when every check passes,
1 when a check fails, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_cap() -> None:
    # must run before numpy is imported to take effect
    n = os.environ.get("ZYGLAB_THREADS")
    if n:
        for v in _THREAD_VARS:
            os.environ[v] = n


def _coerce(raw: str, default):
    if isinstance(default, bool):
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(x) for x in raw.replace(",", " ").split())
    return raw.strip()


def build_config(cls, section: dict[str, str] | None):
    from .errors import ConfigurationError

    cfg = cls()
    if not section:
        return cfg
    names = {f.name for f in dataclasses.fields(cls)}
    updates = {}
    for key, raw in section.items():
        if key not in names:
            raise ConfigurationError(f"unknown key {key!r}; valid keys: {sorted(names)}")
        try:
            updates[key] = _coerce(raw, getattr(cfg, key))
        except ValueError as e:
            raise ConfigurationError(f"bad value for {key!r}: {e}") from None
    return dataclasses.replace(cfg, **updates)


def read_config(path: str | None, experiment: str) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    section = dict(parser[experiment]) if parser.has_section(experiment) else {}
    run = dict(parser["run"]) if parser.has_section("run") else {}
    return section, run


def format_table(rows) -> str:
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    return "\n".join(f"{a:<{w0}}  {b:<{w1}}  {c}" for a, b, c in rows)


def _parser(names) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zyglab", description="Zygmund-dilation numerical experiments")
    p.add_argument("experiment", help="experiment name, or 'list'")
    p.add_argument("--config", help="INI file with a section named after the experiment")
    p.add_argument("--small", action="store_true", help="reduced grid preset for quick runs")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default: runs/<experiment>)")
    return p


def main(argv=None) -> int:
    _apply_thread_cap()
    from .errors import ZyglabError
    from .experiments import EXPERIMENTS, list_experiments

    parser = _parser(EXPERIMENTS)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.experiment == "list":
        print(format_table([("experiment", "description", "reproduces"), *list_experiments()]))
        return EXIT_OK
    exp = EXPERIMENTS.get(args.experiment)
    if exp is None:
        print(f"zyglab: unknown experiment {args.experiment!r}; try 'zyglab list'", file=sys.stderr)
        return EXIT_USAGE
    try:
        section, run = read_config(args.config, exp.name)
        cfg = build_config(exp.config, section)
        seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    except (ZyglabError, FileNotFoundError, ValueError, configparser.Error) as e:
        print(f"zyglab: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or run.get("out") or Path("runs") / exp.name)
    try:
        report = exp.runner(cfg, seed=seed, small=args.small)
    except ZyglabError as e:
        print(f"zyglab: {exp.name} failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    report.write(out)
    sys.stdout.write(report.summary())
    if not report.passed:
        failed = [k for k, v in report.checks.items() if not v]
        print(f"zyglab: failing checks: {'; '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
