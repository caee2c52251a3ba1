"""Experiment configuration in TOML.

``parse_config`` validates a document and returns a fully resolved
:class:`ExperimentConfig`: every default is filled in, so the resolved form
(echoed into each report) says exactly what ran.  ``serialize_config`` writes
it back as TOML; parsing that text gives an equal config.

Layout::

    experiment = "clt-1d"      # slln | clt-1d | clt-fidi | clt-truncated | vervaat
                               # | lil-scan | limit-process-check | schedule
    seed = 1
    n_paths = 10000
    workers = 1                # 0 = one per CPU
    b = 0.99                   # experiment parameters at top level
    [model]
    kind = "independent-product"
    xi = { kind = "exponential", rate = 1.0 }
    eta = { kind = "normal", mean = 0.0, sd = 1.0 }
    [truncation]
    tol = 1e-9
    [output]
    dir = "out"
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..limit_process import integral_defaults
from ..models import Marginal, PairModel
from ..perpetuity import TruncationControl
from ..schedules import KINDS as SCHEDULE_KINDS, DomainError, index_N2
from ..stats.report import config_digest

EXPERIMENTS = ("slln", "clt-1d", "clt-fidi", "clt-truncated", "vervaat", "lil-scan", "limit-process-check",
               "schedule")
MARGINAL_FIELDS = {"point": ("c",), "normal": ("mean", "sd"), "exponential": ("rate",),
                   "two-point": ("x1", "x2", "p"), "uniform": ("lo", "hi")}

_EXP1 = {"kind": "exponential", "rate": 1.0}
_NORMAL = {"kind": "normal", "mean": 0.0, "sd": 1.0}
# reference models used when a config has no [model] table
DEFAULT_MODELS = {
    "slln": {"kind": "independent-product", "xi": _EXP1, "eta": _EXP1},
    "clt-1d": {"kind": "independent-product", "xi": _EXP1, "eta": _NORMAL},
    "clt-fidi": {"kind": "independent-product", "xi": _EXP1, "eta": _NORMAL},
    "clt-truncated": {"kind": "independent-product", "xi": _EXP1, "eta": _NORMAL},
    "vervaat": {"kind": "independent-product", "xi": _EXP1, "eta": _NORMAL},
    "lil-scan": {"kind": "independent-product", "xi": _EXP1, "eta": _NORMAL},
}
DEFAULT_PATHS = {"slln": 200, "clt-1d": 10_000, "clt-fidi": 10_000, "clt-truncated": 10_000, "vervaat": 10_000,
                 "lil-scan": 100, "limit-process-check": 100_000, "schedule": 1}
COMMON_KEYS = {"experiment", "seed", "n_paths", "workers", "model", "truncation", "output"}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted key path, ``line``/``column`` locate it (1-based)."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        prefix = f"{key}: " if key else ""
        super().__init__(f"{prefix}{message}{where}")
        self.key = key
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    n_paths: int
    workers: int
    model: dict | None
    params: dict
    truncation: dict | None
    schedule: dict | None
    output: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "n_paths": self.n_paths, "workers": self.workers}
        d.update(self.params)
        if self.model is not None:
            d["model"] = self.model
        if self.truncation is not None:
            d["truncation"] = self.truncation
        if self.schedule is not None:
            d["schedule"] = self.schedule
        d["output"] = self.output
        return d

    def digest(self) -> str:
        """Hash of everything that affects results (not workers or output paths)."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("output")
        return config_digest(d)

    def pair_model(self) -> PairModel:
        return build_model(self.model)

    def control(self) -> TruncationControl:
        return TruncationControl(**self.truncation)


# ------------------------------------------------------------------ locating

def _locate(text: str, path: str) -> tuple[int | None, int | None]:
    """Best-effort line and column of the dotted key ``path`` in ``text``."""
    parts = path.split(".")
    table: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        header = re.match(r"\s*\[\s*([^\]]+?)\s*\]\s*$", line)
        if header:
            table = [p.strip().strip('"') for p in header.group(1).split(".")]
            if table == parts:
                return lineno, raw.index("[") + 1
            continue
        m = re.match(r"\s*([A-Za-z0-9_\-\.\"]+)\s*=", line)
        if m:
            key = [p.strip().strip('"') for p in m.group(1).split(".")]
            full = table + key
            if full == parts[:len(full)] and len(full) >= 1:
                return lineno, m.start(1) + 1
    return None, None


class _Ctx:
    def __init__(self, text: str):
        self.text = text

    def error(self, key: str, message: str) -> ConfigError:
        line, col = _locate(self.text, key)
        return ConfigError(message, key, line, col)


# ---------------------------------------------------------------- validators

def _number(ctx, key, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ctx.error(key, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ctx.error(key, "must be finite")
    return v


def _integer(ctx, key, value, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ctx.error(key, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ctx.error(key, f"must be at least {lo}")
    return int(value)


def _open_unit(ctx, key, value) -> float:
    v = _number(ctx, key, value)
    if not 0.0 < v < 1.0:
        raise ctx.error(key, f"must lie in the open interval (0, 1), got {v!r}")
    return v


def _positive(ctx, key, value) -> float:
    v = _number(ctx, key, value)
    if not v > 0.0:
        raise ctx.error(key, f"must be positive, got {v!r}")
    return v


def _list(ctx, key, value, item, ascending=True) -> list:
    if not isinstance(value, list):
        value = [value]
    if not value:
        raise ctx.error(key, "must be nonempty")
    out = [item(ctx, key, v) for v in value]
    if ascending and any(a >= b for a, b in zip(out, out[1:])):
        raise ctx.error(key, "must be strictly ascending")
    return out


def _check_keys(ctx, prefix, table, allowed):
    for k in table:
        if k not in allowed:
            path = f"{prefix}.{k}" if prefix else k
            raise ctx.error(path, f"unknown key; expected one of {sorted(allowed)}")


def _marginal(ctx, key, spec) -> dict:
    if not isinstance(spec, dict):
        raise ctx.error(key, "expected a table with 'kind' and parameters")
    kind = spec.get("kind")
    if kind not in MARGINAL_FIELDS:
        raise ctx.error(f"{key}.kind", f"unknown marginal kind {kind!r}; expected one of {sorted(MARGINAL_FIELDS)}")
    fields = MARGINAL_FIELDS[kind]
    _check_keys(ctx, key, spec, {"kind", *fields})
    out = {"kind": kind}
    for f in fields:
        if f not in spec:
            raise ctx.error(f"{key}.{f}", f"missing parameter of {kind} marginal")
        out[f] = _number(ctx, f"{key}.{f}", spec[f])
    try:
        _build_marginal(out)
    except ValueError as exc:
        raise ctx.error(key, str(exc)) from None
    return out


def _build_marginal(spec: dict) -> Marginal:
    return Marginal(spec["kind"], tuple(spec[f] for f in MARGINAL_FIELDS[spec["kind"]]))


def build_model(spec: dict) -> PairModel:
    kind = spec["kind"]
    if kind == "degenerate":
        return PairModel.degenerate(spec["x"], spec["y"])
    if kind == "independent-product":
        return PairModel.independent(_build_marginal(spec["xi"]), _build_marginal(spec["eta"]))
    if kind == "linear-coupled":
        return PairModel.linear_coupled(_build_marginal(spec["xi"]), spec["a"], spec["c"],
                                        _build_marginal(spec["noise"]))
    return PairModel.user_table(spec["rows"])


def _model(ctx, spec) -> dict:
    if not isinstance(spec, dict):
        raise ctx.error("model", "expected a table")
    kind = spec.get("kind")
    if kind == "degenerate":
        _check_keys(ctx, "model", spec, {"kind", "x", "y"})
        out = {"kind": kind, "x": _number(ctx, "model.x", spec.get("x", 1.0)),
               "y": _number(ctx, "model.y", spec.get("y", 1.0))}
    elif kind == "independent-product":
        _check_keys(ctx, "model", spec, {"kind", "xi", "eta"})
        for k in ("xi", "eta"):
            if k not in spec:
                raise ctx.error(f"model.{k}", "missing marginal")
        out = {"kind": kind, "xi": _marginal(ctx, "model.xi", spec["xi"]),
               "eta": _marginal(ctx, "model.eta", spec["eta"])}
    elif kind == "linear-coupled":
        _check_keys(ctx, "model", spec, {"kind", "xi", "a", "c", "noise"})
        if "xi" not in spec:
            raise ctx.error("model.xi", "missing marginal")
        out = {"kind": kind, "xi": _marginal(ctx, "model.xi", spec["xi"]),
               "a": _number(ctx, "model.a", spec.get("a", 0.0)), "c": _number(ctx, "model.c", spec.get("c", 0.0)),
               "noise": _marginal(ctx, "model.noise", spec.get("noise", {"kind": "point", "c": 0.0}))}
    elif kind == "user-table":
        _check_keys(ctx, "model", spec, {"kind", "rows"})
        rows = spec.get("rows")
        if not isinstance(rows, list) or not rows:
            raise ctx.error("model.rows", "expected a nonempty list of [xi, eta, probability] rows")
        for r in rows:
            if not isinstance(r, list) or len(r) != 3:
                raise ctx.error("model.rows", "each row must be a list [xi, eta, probability]")
        out = {"kind": kind, "rows": [[_number(ctx, "model.rows", v) for v in r] for r in rows]}
    else:
        raise ctx.error("model.kind", f"unknown model kind {kind!r}; expected one of "
                                      "['degenerate', 'independent-product', 'linear-coupled', 'user-table']")
    try:
        build_model(out)
    except ValueError as exc:
        raise ctx.error("model", str(exc)) from None
    return out


def _truncation(ctx, spec, experiment) -> dict:
    if not isinstance(spec, dict):
        raise ctx.error("truncation", "expected a table")
    _check_keys(ctx, "truncation", spec, {"tol", "k_min", "k_max", "delta"})
    base = TruncationControl(k_max=1_000_000_000) if experiment == "lil-scan" else TruncationControl()
    out = {"tol": _positive(ctx, "truncation.tol", spec.get("tol", base.tol)),
           "k_min": _integer(ctx, "truncation.k_min", spec.get("k_min", base.k_min), 1),
           "k_max": _integer(ctx, "truncation.k_max", spec.get("k_max", base.k_max), 1),
           "delta": _number(ctx, "truncation.delta", spec.get("delta", base.delta))}
    try:
        TruncationControl(**out)
    except ValueError as exc:
        raise ctx.error("truncation", str(exc)) from None
    return out


def _schedule(ctx, spec, default_n_max) -> dict:
    if not isinstance(spec, dict):
        raise ctx.error("schedule", "expected a table")
    _check_keys(ctx, "schedule", spec, {"kind", "n_max"})
    kind = spec.get("kind", "inverse-square")
    if kind not in SCHEDULE_KINDS:
        raise ctx.error("schedule.kind", f"unknown schedule {kind!r}; expected one of {list(SCHEDULE_KINDS)}")
    return {"kind": kind, "n_max": _integer(ctx, "schedule.n_max", spec.get("n_max", default_n_max), 10)}


def _params(ctx, experiment, doc) -> dict:
    g = doc.get
    p: dict = {}
    if experiment == "slln":
        p["b"] = _list(ctx, "b", g("b", [0.999]), _open_unit)
        p["rel_tol"] = _positive(ctx, "rel_tol", g("rel_tol", 0.05))
    elif experiment in ("clt-1d", "clt-fidi"):
        p["b"] = _open_unit(ctx, "b", g("b", 0.99))
        p["u"] = _list(ctx, "u", g("u", [1.0] if experiment == "clt-1d" else [1.0, 2.0]), _positive)
        if experiment == "clt-1d" and len(p["u"]) != 1:
            raise ctx.error("u", "clt-1d takes a single u; use clt-fidi for several")
        if experiment == "clt-fidi" and len(p["u"]) < 2:
            raise ctx.error("u", "clt-fidi needs at least two values of u")
        p["var_tol"] = _positive(ctx, "var_tol", g("var_tol", 0.05))
        p["cov_tol"] = _positive(ctx, "cov_tol", g("cov_tol", 0.07))
        p["ks_alpha"] = _ks_alpha(ctx, g("ks_alpha", 0.01))
    elif experiment == "clt-truncated":
        p["b"] = _open_unit(ctx, "b", g("b", 0.99))
        if "M" in doc:
            p["M"] = _integer(ctx, "M", doc["M"], 1)
        else:
            try:
                p["M"] = index_N2(p["b"])
            except DomainError as exc:
                raise ctx.error("b", str(exc)) from None
            if p["M"] < 1:
                raise ctx.error("b", "N_2(b) < 1; give M explicitly")
        p["var_tol"] = _positive(ctx, "var_tol", g("var_tol", 0.05))
        p["ks_alpha"] = _ks_alpha(ctx, g("ks_alpha", 0.01))
    elif experiment == "vervaat":
        p["alpha"] = _list(ctx, "alpha", g("alpha", [0.005]), _positive)
        p["rel_tol"] = _positive(ctx, "rel_tol", g("rel_tol", 0.10))
    elif experiment == "lil-scan":
        p["rel_tol"] = _positive(ctx, "rel_tol", g("rel_tol", 1e-3))
        p["envelope_fraction"] = _open_unit(ctx, "envelope_fraction", g("envelope_fraction", 0.9))
        p["coverage_min"] = _open_unit(ctx, "coverage_min", g("coverage_min", 0.5))
    elif experiment == "limit-process-check":
        p["u_grid"] = _list(ctx, "u_grid", g("u_grid", [0.5, 1.0, 2.0]), _positive)
        Y, delta = integral_defaults(p["u_grid"])
        p["Y"] = _positive(ctx, "Y", g("Y", Y))
        p["delta"] = _positive(ctx, "delta", g("delta", delta))
        p["jitter"] = _positive(ctx, "jitter", g("jitter", 1e-12))
        p["rel_tol"] = _positive(ctx, "rel_tol", g("rel_tol", 0.03))
        dump = g("dump", False)
        if not isinstance(dump, bool):
            raise ctx.error("dump", "expected true or false")
        p["dump"] = dump
    return p


PARAM_KEYS = {
    "slln": {"b", "rel_tol"},
    "clt-1d": {"b", "u", "var_tol", "cov_tol", "ks_alpha"},
    "clt-fidi": {"b", "u", "var_tol", "cov_tol", "ks_alpha"},
    "clt-truncated": {"b", "M", "var_tol", "ks_alpha"},
    "vervaat": {"alpha", "rel_tol"},
    "lil-scan": {"rel_tol", "envelope_fraction", "coverage_min", "schedule"},
    "limit-process-check": {"u_grid", "Y", "delta", "jitter", "rel_tol", "dump"},
    "schedule": {"schedule"},
}


def _ks_alpha(ctx, value) -> float:
    v = _number(ctx, "ks_alpha", value)
    if v not in (0.10, 0.05, 0.01, 0.001):
        raise ctx.error("ks_alpha", "must be one of 0.1, 0.05, 0.01, 0.001")
    return v


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully resolve a TOML experiment configuration."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+), column (\d+)", msg)
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        if line is None and "end of document" in msg:
            line = text.count("\n") + 1
        raise ConfigError(f"malformed TOML: {msg}", None, line, col) from None
    return resolve(doc, text)


def resolve(doc: dict, text: str = "") -> ExperimentConfig:
    ctx = _Ctx(text)
    experiment = doc.get("experiment")
    if experiment is None:
        raise ConfigError("experiment kind is required", "experiment")
    if experiment not in EXPERIMENTS:
        raise ctx.error("experiment", f"unknown experiment {experiment!r}; expected one of {list(EXPERIMENTS)}")
    _check_keys(ctx, "", doc, COMMON_KEYS | PARAM_KEYS[experiment])
    seed = _integer(ctx, "seed", doc.get("seed", 0), 0)
    if seed >= 1 << 64:
        raise ctx.error("seed", "must fit in 64 bits")
    n_paths = _integer(ctx, "n_paths", doc.get("n_paths", DEFAULT_PATHS[experiment]), 1)
    if experiment not in ("slln", "schedule", "lil-scan") and n_paths < 2:
        raise ctx.error("n_paths", "variance estimates need at least 2 paths")
    workers = _integer(ctx, "workers", doc.get("workers", 1), 0)
    params = _params(ctx, experiment, doc)
    needs_model = experiment in DEFAULT_MODELS
    if "model" in doc and not needs_model:
        raise ctx.error("model", f"{experiment} takes no model")
    model = _model(ctx, doc.get("model", DEFAULT_MODELS.get(experiment))) if needs_model else None
    truncation = _truncation(ctx, doc.get("truncation", {}), experiment) if needs_model else None
    if "truncation" in doc and not needs_model:
        raise ctx.error("truncation", f"{experiment} takes no truncation control")
    schedule = None
    if experiment in ("lil-scan", "schedule"):
        schedule = _schedule(ctx, doc.get("schedule", {}), 3162 if experiment == "lil-scan" else 100_000)
    out = doc.get("output", {})
    if not isinstance(out, dict):
        raise ctx.error("output", "expected a table")
    _check_keys(ctx, "output", out, {"dir"})
    out_dir = out.get("dir", "perplab-out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ctx.error("output.dir", "expected a nonempty string")
    return ExperimentConfig(experiment, seed, n_paths, workers, model, params, truncation, schedule,
                            {"dir": out_dir})


def serialize_config(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def with_overrides(config: ExperimentConfig, *, seed=None, n_paths=None, workers=None, out=None) -> ExperimentConfig:
    """Re-resolve with command-line overrides applied."""
    d = config.to_dict()
    if seed is not None:
        d["seed"] = seed
    if n_paths is not None:
        d["n_paths"] = n_paths
    if workers is not None:
        d["workers"] = workers
    if out is not None:
        d["output"] = {"dir": str(out)}
    return resolve(d)
