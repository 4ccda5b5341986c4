"""Report records and their on-disk form (report.json plus one CSV per series)."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

import nslab


@dataclass
class Rule:
    """One pass/fail check; ``asserted`` rules decide the exit code."""

    rule: str
    passed: bool
    measured: float | None = None
    target: float | None = None
    bound: float | None = None
    tolerance: float | None = None
    window: tuple | None = None
    asserted: bool = True
    status: str = "evaluated"
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "rule": self.rule,
            "passed": bool(self.passed),
            "measured": self.measured,
            "target": self.target,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "window": list(self.window) if self.window is not None else None,
            "asserted": self.asserted,
            "status": self.status,
            "note": self.note,
        }


@dataclass
class Report:
    scenario: str
    config: dict
    fits: dict = field(default_factory=dict)
    inequalities: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_clock: float | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rules if r.asserted)

    def add_rule(self, rule: Rule) -> Rule:
        self.rules.append(rule)
        return rule

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "fits": self.fits,
            "inequalities": self.inequalities,
            "rules": [r.as_dict() for r in self.rules],
            "series": sorted(self.series),
            "diagnostics": self.diagnostics,
            "passed": self.passed,
            "versions": versions(),
        }


def versions() -> dict:
    return {"nslab": nslab.__version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


_SAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def series_filename(name: str) -> str:
    return f"series_{_SAFE.sub('_', name)}.csv"


def format_series(points) -> str:
    lines = ["t,value"]
    for t, v in points:
        lines.append(f"{float(t):.17g},{float(v):.17g}")
    return "\n".join(lines) + "\n"


def parse_series(text: str) -> list[tuple[float, float]]:
    rows = text.strip().splitlines()
    if not rows or rows[0].strip() != "t,value":
        raise ValueError("series CSV must start with the header 't,value'")
    out = []
    for line in rows[1:]:
        t, v = line.split(",")
        out.append((float(t), float(v)))
    return out


def read_series(path) -> list[tuple[float, float]]:
    return parse_series(Path(path).read_text())


def report_json(report: Report) -> str:
    return json.dumps(_clean(report.as_dict()), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: Report, out_dir) -> list[Path]:
    """Write report.json, one CSV per series and timing.json; returns the paths written.

    Wall-clock time goes to timing.json so report.json stays byte-identical
    across repeated runs.
    """
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(report_json(report))
        written.append(path)
        for name in sorted(report.series):
            path = out / series_filename(name)
            path.write_text(format_series(report.series[name]))
            written.append(path)
        if report.wall_clock is not None:
            path = out / "timing.json"
            path.write_text(json.dumps({"wall_clock_seconds": report.wall_clock}, sort_keys=True) + "\n")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written
