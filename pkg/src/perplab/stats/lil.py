"""Iterated-logarithm scans of ``f(b_n) X(b_n)`` along a discount schedule.

All levels of the schedule are evaluated on one path in a single pass, so
the normalized values ``R_n`` form one realization of the family whose
limit points the iterated-logarithm law describes.  ``log log(1/(1-b^2))``
stays below about 3 at any reachable ``b``; the scan therefore checks an
envelope, not the limit constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ..models import PairModel
from ..perpetuity import TruncationControl
from ..scan import scan
from ..schedules import DiscountSchedule, DomainError, f_scale
from ..walk import PathStream
from .experiments import _ctrl_config, _model_config, _require_centered, _require_spread, serial_map
from .report import ExperimentReport, Verdict, config_digest

BIN_WIDTH = 0.1
SCAN_COLUMNS = ("n", "b", "one_minus_b", "value", "scaled_value")
# the smallest 1 - b of a desk-scale schedule needs about 1.5e8 steps
LIL_CTRL = TruncationControl(k_max=1_000_000_000)
ENVELOPE_MAX = (0.2, 1.5)
ENVELOPE_MIN = (-1.5, -0.2)


@dataclass(frozen=True)
class LilPath:
    """Scan of one path: levels ``n`` in the domain of ``f_scale`` and ``R_n``."""

    n: np.ndarray
    one_minus_b: np.ndarray
    values: np.ndarray
    scaled: np.ndarray
    running_max: np.ndarray
    running_min: np.ndarray
    converged: np.ndarray
    visited_bins: frozenset
    coverage: float

    @property
    def max(self) -> float:
        return float(self.running_max[-1])

    @property
    def min(self) -> float:
        return float(self.running_min[-1])

    def in_envelope(self) -> bool:
        return ENVELOPE_MAX[0] < self.max < ENVELOPE_MAX[1] and ENVELOPE_MIN[0] < self.min < ENVELOPE_MIN[1]


def f_levels(schedule: DiscountSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices, ``1 - b_n`` and ``f(b_n)`` for the levels inside the domain of ``f_scale``."""
    keep, fs = [], []
    for i, omb in enumerate(schedule.one_minus_b.tolist()):
        try:
            fs.append(f_scale(1.0 - omb, one_minus_b=omb))
            keep.append(i)
        except DomainError:
            continue
    if not keep:
        raise DomainError("no level of the schedule lies in the domain of f_scale")
    idx = np.array(keep)
    return schedule.n[idx], schedule.one_minus_b[idx], np.array(fs)


def cluster_bins(scaled) -> frozenset:
    """Indices ``k`` of the bins ``[k/10, (k+1)/10)`` of ``[-1, 1)`` visited by ``scaled``."""
    r = np.asarray(scaled, dtype=float)
    r = r[(r >= -1.0) & (r < 1.0)]
    return frozenset(int(k) for k in np.floor(r / BIN_WIDTH + 1e-12).astype(int).tolist())


def cluster_coverage(scaled) -> float:
    """Fraction of the bins meeting ``[-R, R]``, ``R = min(max |R_n|, 1)``, that ``scaled`` visits."""
    r = np.asarray(scaled, dtype=float)
    reach = min(float(np.max(np.abs(r))), 1.0)
    if reach == 0.0:
        return 0.0
    eligible = [k for k in range(-10, 10) if k * BIN_WIDTH < reach and (k + 1) * BIN_WIDTH > -reach]
    visited = cluster_bins(r)
    return sum(k in visited for k in eligible) / len(eligible)


def lil_path(stream, schedule: DiscountSchedule, s2: float, mu: float, ctrl: TruncationControl | None = None, *,
             rel_tol: float = 1e-3) -> LilPath:
    """``R_n = f(b_n) X(b_n) / (2 s^2/mu)^{1/2}`` on one path for every usable level.

    Level ``n`` gets the certificate tolerance ``rel_tol (2 s^2/mu)^{1/2} / f(b_n)``,
    so each ``R_n`` carries an error of at most ``rel_tol`` plus rounding.
    """
    ctrl = ctrl or LIL_CTRL
    n, omb, fs = f_levels(schedule)
    scale = math.sqrt(2.0 * s2 / mu)
    if not scale > 0.0:
        raise ValueError("need s2 > 0 to normalize")
    vals = scan(stream, omb, ctrl, tols=rel_tol * scale / fs)
    x = np.array([v.value for v in vals])
    r = fs * x / scale
    return LilPath(n, omb, x, r, np.maximum.accumulate(r), np.minimum.accumulate(r),
                   np.array([v.converged for v in vals]), cluster_bins(r), cluster_coverage(r))


def gaussian_envelope_probability(schedule: DiscountSchedule, n_samples: int = 20_000, seed: int = 0,
                                  batch: int = 2000) -> float:
    """Probability of the envelope under the Gaussian approximation of ``(R_n)``.

    Uses ``Cov(R_i, R_j) = f_i f_j / (2 (log(1/b_i) + log(1/b_j)))``, the
    large-path limit of ``Cov(X(b_i), X(b_j)) mu / s^2``; it shares no code
    with the path scans and serves as their reference.
    """
    n, omb, fs = f_levels(schedule)
    lb = -np.log1p(-omb)
    cov = np.outer(fs, fs) / (2.0 * (lb[:, None] + lb[None, :]))
    w, V = np.linalg.eigh(cov)
    A = V * np.sqrt(np.clip(w, 0.0, None))
    gen = np.random.default_rng(seed)
    inside = 0
    for lo in range(0, n_samples, batch):
        r = gen.standard_normal((min(batch, n_samples - lo), len(w))) @ A.T
        mx, mn = r.max(axis=1), r.min(axis=1)
        inside += int(np.count_nonzero((mx > ENVELOPE_MAX[0]) & (mx < ENVELOPE_MAX[1])
                                       & (mn > ENVELOPE_MIN[0]) & (mn < ENVELOPE_MIN[1])))
    return inside / n_samples


def _scan_table(lp: LilPath) -> tuple:
    rows = [(int(k), 1.0 - float(o), float(o), float(v), float(s))
            for k, o, v, s in zip(lp.n, lp.one_minus_b, lp.values, lp.scaled)]
    return SCAN_COLUMNS, rows


def _lil_config(model, schedule, n_paths, seed, ctrl, rel_tol, coverage_min):
    return {"experiment": "lil-scan", "model": _model_config(model),
            "schedule": {"kind": schedule.kind, "n_max": schedule.n_max}, "n_paths": n_paths, "seed": seed,
            "truncation": _ctrl_config(ctrl), "rel_tol": rel_tol, "coverage_min": coverage_min}


def lil_scan(model: PairModel, schedule: DiscountSchedule, seed: int, ctrl: TruncationControl | None = None, *,
             path_index: int = 0, rel_tol: float = 1e-3, digest: str | None = None) -> ExperimentReport:
    """Scan of one path: running extremes, visited bins and the envelope verdicts."""
    _require_centered(model)
    _require_spread(model)
    ctrl = ctrl or LIL_CTRL
    lp = lil_path(PathStream(model, seed, path_index), schedule, model.s2, model.mu, ctrl, rel_tol=rel_tol)
    stats = {"levels": len(lp.n), "running_max": lp.max, "running_min": lp.min, "coverage": lp.coverage,
             "bins_visited": len(lp.visited_bins), "unconverged_levels": int(np.count_nonzero(~lp.converged))}
    verdicts = [Verdict.check("running_max_low", lp.max, ENVELOPE_MAX[0], 0.0, "min"),
                Verdict.check("running_max_high", lp.max, ENVELOPE_MAX[1], 0.0, "max"),
                Verdict.check("running_min_low", lp.min, ENVELOPE_MIN[0], 0.0, "min"),
                Verdict.check("running_min_high", lp.min, ENVELOPE_MIN[1], 0.0, "max"),
                Verdict.check("unconverged_levels", stats["unconverged_levels"], 0, 0.0, "max")]
    config = _lil_config(model, schedule, 1, seed, ctrl, rel_tol, None)
    config["path_index"] = path_index
    return ExperimentReport("lil-scan", digest or config_digest(config), stats, verdicts, config,
                            {"scan": _scan_table(lp)})


def _lil_work(model, schedule, seed, ctrl, rel_tol, p):
    return lil_path(PathStream(model, seed, p), schedule, model.s2, model.mu, ctrl, rel_tol=rel_tol)


def lil_experiment(model: PairModel, schedule: DiscountSchedule, n_paths: int, seed: int,
                   ctrl: TruncationControl | None = None, *, rel_tol: float = 1e-3, envelope_fraction: float = 0.9,
                   coverage_min: float = 0.5, mapper=serial_map, digest: str | None = None,
                   keep_scans: bool = True) -> ExperimentReport:
    """Envelope and cluster-coverage statistics of ``n_paths`` independent scans.

    Verdicts: at least ``envelope_fraction`` of the paths have running max in
    ``(0.2, 1.5)`` and running min in ``(-1.5, -0.2)``; at least the same
    fraction have cluster coverage ``>= coverage_min``; the running max never
    decreases; every level converged.
    """
    _require_centered(model)
    _require_spread(model)
    ctrl = ctrl or LIL_CTRL
    paths = mapper(partial(_lil_work, model, schedule, seed, ctrl, rel_tol), range(n_paths))
    inside = np.array([lp.in_envelope() for lp in paths])
    cov = np.array([lp.coverage for lp in paths])
    monotone = all(bool(np.all(np.diff(lp.running_max) >= 0.0)) and bool(np.all(np.diff(lp.running_min) <= 0.0))
                   for lp in paths)
    unconverged = int(sum(np.count_nonzero(~lp.converged) for lp in paths))
    env_frac = float(np.count_nonzero(inside)) / n_paths
    cov_frac = float(np.count_nonzero(cov >= coverage_min)) / n_paths
    maxes = np.array([lp.max for lp in paths])
    mins = np.array([lp.min for lp in paths])
    stats = {"n_paths": n_paths, "levels": len(paths[0].n), "envelope_fraction": env_frac,
             "coverage_fraction": cov_frac, "median_coverage": float(np.median(cov)),
             "median_running_max": float(np.median(maxes)), "median_running_min": float(np.median(mins)),
             "largest_running_max": float(maxes.max()), "smallest_running_min": float(mins.min()),
             "unconverged_levels": unconverged}
    verdicts = [Verdict.check("envelope_fraction", env_frac, envelope_fraction, 0.0, "min"),
                Verdict.check("coverage_fraction", cov_frac, envelope_fraction, 0.0, "min"),
                Verdict.check("running_extremes_monotone", float(monotone), 1.0, 0.0, "min"),
                Verdict.check("unconverged_levels", unconverged, 0, 0.0, "max")]
    config = _lil_config(model, schedule, n_paths, seed, ctrl, rel_tol, coverage_min)
    config["envelope_fraction"] = envelope_fraction
    tables = {}
    if keep_scans:
        tables = {f"scan_{p:04d}": _scan_table(lp) for p, lp in enumerate(paths)}
        tables["extremes"] = (("path_index", "running_max", "running_min", "coverage", "in_envelope"),
                              [(p, lp.max, lp.min, lp.coverage, bool(lp.in_envelope())) for p, lp in enumerate(paths)])
    return ExperimentReport("lil-scan", digest or config_digest(config), stats, verdicts, config, tables)
