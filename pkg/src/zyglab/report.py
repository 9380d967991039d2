"""Structured experiment results."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


def _plain(x: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into JSON-friendly values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


@dataclass
class ExperimentReport:
    """Named measurements, pass/fail checks, tabulated curves and provenance."""

    name: str
    metrics: dict[str, Any] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    curves: dict[str, tuple[list[str], list[list[float]]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    # wall-clock data; kept out of report.json so reruns are byte-identical
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def check(self, label: str, ok) -> bool:
        self.checks[label] = bool(ok)
        return bool(ok)

    def add_curve(self, name: str, columns: list[str], rows) -> None:
        self.curves[name] = (list(columns), [list(map(float, r)) for r in rows])

    def to_dict(self) -> dict:
        return _plain(
            {
                "name": self.name,
                "passed": self.passed,
                "checks": self.checks,
                "metrics": self.metrics,
                "warnings": self.warnings,
                "meta": self.meta,
                "curves": {k: {"columns": c, "rows": r} for k, (c, r) in self.curves.items()},
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  [{'ok' if v else 'FAIL'}] {k}" for k, v in self.checks.items()]
        lines += [f"  warning: {w}" for w in self.warnings]
        lines += [f"  time {k}: {v:.3f} s" for k, v in self.timings.items()]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        (out / "curves").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n")
        (out / "summary.txt").write_text(self.summary())
        for name, (cols, rows) in self.curves.items():
            with open(out / "curves" / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                w.writerows([[repr(v) for v in r] for r in rows])
        return out
