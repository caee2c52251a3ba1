"""Experiment reports: named statistics, verdicts and CSV serialization.

Floats are written with ``repr`` so every value round-trips exactly and no
locale is involved.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

REPORT_COLUMNS = ("experiment", "name", "observed", "target", "tolerance", "pass")


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return repr(float(x))


def canonical(obj):
    """JSON-ready form with floats as their ``repr`` strings."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return "f:" + repr(obj)
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def config_digest(config: dict) -> str:
    text = json.dumps(canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Verdict:
    """One pass/fail criterion.

    ``rule`` is ``rel`` (``|obs - target| <= tol |target|``), ``abs``
    (``|obs - target| <= tol``), ``max`` (``obs <= target``) or ``min``
    (``obs >= target``).
    """

    name: str
    observed: float
    target: float
    tolerance: float
    rule: str
    passed: bool

    @classmethod
    def check(cls, name: str, observed: float, target: float, tolerance: float = 0.0, rule: str = "rel") -> "Verdict":
        o, t = float(observed), float(target)
        if rule == "rel":
            ok = abs(o - t) <= tolerance * abs(t)
        elif rule == "abs":
            ok = abs(o - t) <= tolerance
        elif rule == "max":
            ok = o <= t
        elif rule == "min":
            ok = o >= t
        else:
            raise ValueError(f"unknown rule {rule!r}")
        return cls(name, o, t, float(tolerance), rule, bool(ok and math.isfinite(o)))


@dataclass
class ExperimentReport:
    experiment: str
    config_digest: str
    statistics: dict
    verdicts: list
    config: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for v in self.verdicts:
            w.writerow([self.experiment, v.name, fmt(v.observed), fmt(v.target), fmt(v.tolerance), fmt(v.passed)])
        return buf.getvalue()

    def statistics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("experiment", "name", "value"))
        for k in sorted(self.statistics):
            w.writerow([self.experiment, k, fmt(self.statistics[k])])
        return buf.getvalue()

    def table_csv(self, name: str) -> str:
        columns, rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"experiment {self.experiment}  digest {self.config_digest}  "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        for v in self.verdicts:
            tol = f" tol {v.tolerance:g} ({v.rule})" if v.rule in ("rel", "abs") else f" ({v.rule})"
            lines.append(f"  [{'pass' if v.passed else 'FAIL'}] {v.name}: observed {v.observed:.6g} "
                         f"target {v.target:.6g}{tol}")
        for k in sorted(self.statistics):
            val = self.statistics[k]
            shown = f"{val:.6g}" if isinstance(val, float) else str(val)
            lines.append(f"  {k} = {shown}")
        return "\n".join(lines) + "\n"
