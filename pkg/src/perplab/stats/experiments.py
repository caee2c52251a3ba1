"""Monte Carlo experiments for the limit theorems of discounted perpetuities.

Every experiment is a per-path work function (a pure function of the path
index) followed by a reduction over the ordered results.  ``mapper(fn,
items)`` runs the work items and must return results in item order; the
harness passes a process-pool mapper, the default runs serially.  Because
the reduction always sees the same ordered list, reports are bit-identical
for any worker count.
"""

from __future__ import annotations

import math
from functools import partial

import numpy as np

from ..limit_process import (
    _BATCH,
    covariance_matrix,
    integral_defaults,
    integral_error_bound,
    sample_cholesky,
    sample_integral,
)
from ..models import PairModel
from ..perpetuity import ModelNotCentered, TruncationControl, evaluate, evaluate_grid, truncated_statistic
from ..schedules import index_N2
from ..walk import PathStream
from .ks import ks_critical, ks_distance
from .report import ExperimentReport, Verdict, config_digest

# samples per work item of the limit-process sampler; a multiple of its batch
SAMPLE_CHUNK = 8 * _BATCH


class DegenerateVariance(ValueError):
    """The experiment's limit law is degenerate (zero variance)."""


def serial_map(fn, items):
    return [fn(i) for i in items]


# ------------------------------------------------------------------ reductions

def fmean(x) -> float:
    x = np.asarray(x, dtype=float)
    return math.fsum(x) / len(x)


def fcov(x, y) -> float:
    """Unbiased sample covariance with exactly rounded sums."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    return math.fsum((x - fmean(x)) * (y - fmean(y))) / (n - 1)


def fvar(x) -> float:
    return fcov(x, x)


def cov_matrix(cols: np.ndarray) -> np.ndarray:
    d = cols.shape[1]
    out = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            out[i, j] = out[j, i] = fcov(cols[:, i], cols[:, j])
    return out


def _ukey(u: float) -> str:
    return f"{u:g}"


def _require_centered(model: PairModel) -> None:
    if abs(model.m) > 1e-12 * (1.0 + model.eta_abs_mean):
        raise ModelNotCentered(f"experiment needs E eta = 0, model has m={model.m!r}")


def _require_spread(model: PairModel) -> None:
    if not model.s2 > 0.0:
        raise DegenerateVariance("Var eta = 0: the limit law is a point mass at 0; not a valid configuration")


def _ascending(values, name: str) -> list:
    out = [float(v) for v in values]
    if not out:
        raise ValueError(f"{name} must be nonempty")
    if any(a >= c for a, c in zip(out, out[1:])):
        raise ValueError(f"{name} must be strictly ascending")
    return out


def _model_config(model: PairModel) -> dict:
    return {"kind": model.kind, "params": list(model.params)}


def _ctrl_config(ctrl: TruncationControl) -> dict:
    return {"tol": ctrl.tol, "k_min": ctrl.k_min, "k_max": ctrl.k_max, "delta": ctrl.delta}


def _report(experiment, config, statistics, verdicts, digest=None, tables=None) -> ExperimentReport:
    return ExperimentReport(experiment, digest or config_digest(config), statistics, verdicts, config, tables or {})


# ------------------------------------------------------------------------ SLLN

def _slln_path(model, seed, bs, ctrl, p):
    grid = evaluate_grid(PathStream(model, seed, p), bs, [1.0], ctrl)
    return tuple((1.0 - b) * row[0].value for b, row in zip(bs, grid)), tuple(row[0].converged for row in grid)


def slln_experiment(model: PairModel, bs, n_paths: int, seed: int, ctrl: TruncationControl | None = None, *,
                    rel_tol: float = 0.05, mapper=serial_map, digest: str | None = None) -> ExperimentReport:
    """``(1-b) X(b)`` on ``n_paths`` paths; its median is compared with ``m/mu``.

    For a centred model the target is 0 and the verdict is instead that
    ``|estimate| < 0.1`` on at least 95% of paths.
    """
    ctrl = ctrl or TruncationControl()
    bs = _ascending(bs, "bs")
    out = mapper(partial(_slln_path, model, seed, bs, ctrl), range(n_paths))
    est = np.array([r[0] for r in out])
    unconverged = int(sum(not c for r in out for c in r[1]))
    target = model.m / model.mu
    stats, verdicts = {"target": target, "unconverged_cells": unconverged}, []
    for j, b in enumerate(bs):
        col = est[:, j]
        key = f"b={b!r}"
        med = float(np.median(col))
        frac = float(np.count_nonzero(np.abs(col) < 0.1)) / len(col)
        stats.update({f"median[{key}]": med, f"mean[{key}]": fmean(col),
                      f"sd[{key}]": math.sqrt(fvar(col)) if len(col) > 1 else 0.0,
                      f"fraction_below_0.1[{key}]": frac})
        if target != 0.0:
            verdicts.append(Verdict.check(f"median[{key}]", med, target, rel_tol, "rel"))
        else:
            verdicts.append(Verdict.check(f"fraction_below_0.1[{key}]", frac, 0.95, 0.0, "min"))
    verdicts.append(Verdict.check("unconverged_cells", unconverged, 0, 0.0, "max"))
    config = {"experiment": "slln", "model": _model_config(model), "b": bs, "n_paths": n_paths, "seed": seed,
              "truncation": _ctrl_config(ctrl), "rel_tol": rel_tol}
    return _report("slln", config, stats, verdicts, digest)


# ------------------------------------------------------------------------- CLT

def _clt_path(model, seed, b, us, ctrl, p):
    row = evaluate_grid(PathStream(model, seed, p), [b], us, ctrl)[0]
    scale = math.sqrt((1.0 - b) * (1.0 + b))
    return tuple(scale * c.value for c in row), all(c.converged for c in row)


def clt_experiment(model: PairModel, b: float, u_list, n_paths: int, seed: int,
                   ctrl: TruncationControl | None = None, *, var_tol: float = 0.05, cov_tol: float = 0.07,
                   ks_alpha: float = 0.01, mapper=serial_map, digest: str | None = None) -> ExperimentReport:
    """``(1-b^2)^{1/2} X(b, u)`` for every ``u`` on common paths.

    Targets: variance ``s^2/(mu u)``, covariance ``2 s^2 / (mu (u_i + u_j))``
    and a standard normal law for the standardized first column (``u = 1``
    when present).  One ``u`` gives the ``clt-1d`` report (variance within
    ``var_tol``); several give ``clt-fidi`` (every covariance entry within
    ``cov_tol``).
    """
    _require_centered(model)
    _require_spread(model)
    if not 0.0 < b < 1.0:
        raise ValueError("b must lie in (0, 1)")
    ctrl = ctrl or TruncationControl()
    us = _ascending(u_list, "u_list")
    experiment = "clt-1d" if len(us) == 1 else "clt-fidi"
    out = mapper(partial(_clt_path, model, seed, b, us, ctrl), range(n_paths))
    cols = np.array([r[0] for r in out])
    unconverged = sum(not r[1] for r in out)
    cov = cov_matrix(cols)
    base = model.s2 / model.mu
    target = np.array([[2.0 * base / (ui + uj) for uj in us] for ui in us])
    ks_col = us.index(1.0) if 1.0 in us else 0
    z = cols[:, ks_col] / math.sqrt(target[ks_col, ks_col])
    ks = ks_distance(z)
    crit = ks_critical(n_paths, ks_alpha)
    stats = {"n_paths": n_paths, "ks_distance": ks, "ks_critical": crit, "ks_u": us[ks_col],
             "min_eigenvalue": float(np.linalg.eigvalsh(cov)[0]), "unconverged_paths": unconverged}
    verdicts = []
    for i, ui in enumerate(us):
        stats[f"mean[u={_ukey(ui)}]"] = fmean(cols[:, i])
        for j in range(i, len(us)):
            key = f"u={_ukey(ui)}" if i == j else f"u={_ukey(ui)},{_ukey(us[j])}"
            name = f"var[{key}]" if i == j else f"cov[{key}]"
            stats[name] = float(cov[i, j])
            stats[f"target_{name}"] = float(target[i, j])
            if i != j:
                stats[f"corr[{key}]"] = float(cov[i, j] / math.sqrt(cov[i, i] * cov[j, j]))
                stats[f"target_corr[{key}]"] = float(target[i, j] / math.sqrt(target[i, i] * target[j, j]))
            if experiment == "clt-1d":
                verdicts.append(Verdict.check(name, cov[i, j], target[i, j], var_tol, "rel"))
            else:
                verdicts.append(Verdict.check(name, cov[i, j], target[i, j], cov_tol, "rel"))
    verdicts.append(Verdict.check("ks_distance", ks, crit, 0.0, "max"))
    verdicts.append(Verdict.check("unconverged_paths", unconverged, 0, 0.0, "max"))
    config = {"experiment": experiment, "model": _model_config(model), "b": b, "u": us, "n_paths": n_paths,
              "seed": seed, "truncation": _ctrl_config(ctrl), "var_tol": var_tol, "cov_tol": cov_tol,
              "ks_alpha": ks_alpha}
    return _report(experiment, config, stats, verdicts, digest)


def _trunc_path(model, seed, b, M, p):
    return truncated_statistic(PathStream(model, seed, p), b, M)


def truncated_clt_experiment(model: PairModel, b: float, n_paths: int, seed: int, M: int | None = None, *,
                             var_tol: float = 0.05, ks_alpha: float = 0.01, mapper=serial_map,
                             digest: str | None = None) -> ExperimentReport:
    """Variance of the statistic truncated at ``M`` (default ``N_2(b)``) against ``s^2/mu``.

    Replacing the random normalization by ``sum b^{2 mu k}`` leaves an
    asymptotic variance of ``s^2``; the two targets coincide for ``mu = 1``
    and both are reported.
    """
    _require_centered(model)
    _require_spread(model)
    M = index_N2(b) if M is None else int(M)
    out = np.array(mapper(partial(_trunc_path, model, seed, b, M), range(n_paths)))
    var = fvar(out)
    target = model.s2 / model.mu
    ks = ks_distance(out / math.sqrt(target))
    crit = ks_critical(n_paths, ks_alpha)
    stats = {"M": M, "n_paths": n_paths, "var": var, "target_var": target, "alt_target_var": model.s2,
             "mean": fmean(out), "ks_distance": ks, "ks_critical": crit}
    verdicts = [Verdict.check("var", var, target, var_tol, "rel"), Verdict.check("ks_distance", ks, crit, 0.0, "max")]
    config = {"experiment": "clt-truncated", "model": _model_config(model), "b": b, "M": M, "n_paths": n_paths,
              "seed": seed, "var_tol": var_tol, "ks_alpha": ks_alpha}
    return _report("clt-truncated", config, stats, verdicts, digest)


# --------------------------------------------------------------------- Vervaat

def vervaat_candidates(model: PairModel) -> tuple[float, float]:
    """``(printed, corrected)`` asymptotic variances.

    Both share ``sigma^2 m^2 / (2 mu^3) + gamma m / mu^2``; the printed form
    ends in ``sigma^2 / (2 mu)``, the corrected one in ``s^2 / (2 mu)``.
    """
    mu, m, sigma2, s2, gamma = model.mu, model.m, model.sigma2, model.s2, model.gamma
    common = 0.5 * sigma2 * m * m / mu ** 3 + gamma * m / mu ** 2
    return common + 0.5 * sigma2 / mu, common + 0.5 * s2 / mu


def _vervaat_path(model, seed, alphas, ctrl, p):
    stream = PathStream(model, seed, p)
    out = []
    for a in alphas:
        x = evaluate(stream, math.exp(-a), 1.0, ctrl, one_minus_b=-math.expm1(-a)).value
        out.append(math.sqrt(a) * (x - model.m / (a * model.mu)))
    return tuple(out)


def vervaat_check(model: PairModel, alpha_list, n_paths: int, seed: int, ctrl: TruncationControl | None = None, *,
                  rel_tol: float = 0.10, mapper=serial_map, digest: str | None = None) -> ExperimentReport:
    """Sample variance of ``alpha^{1/2} (sum_k e^{-alpha S_{k-1}} eta_k - m/(alpha mu))``.

    The value is compared with both candidate variances; ``selected`` names
    the candidate(s) within ``rel_tol`` at the smallest ``alpha``.  The
    verdicts check the corrected candidate.
    """
    if not model.sigma2 + model.s2 > 0.0:
        raise DegenerateVariance("need Var xi + Var eta > 0")
    alphas = _ascending(alpha_list, "alpha_list")
    if alphas[0] <= 0.0:
        raise ValueError("alpha must be positive")
    ctrl = ctrl or TruncationControl()
    out = np.array(mapper(partial(_vervaat_path, model, seed, alphas, ctrl), range(n_paths)))
    printed, corrected = vervaat_candidates(model)
    stats = {"v2_printed": printed, "v2_corrected": corrected, "n_paths": n_paths}
    verdicts = []
    selected = None
    for j, a in enumerate(alphas):
        key = f"alpha={a!r}"
        var = fvar(out[:, j])
        p_ok = abs(var - printed) <= rel_tol * abs(printed)
        c_ok = abs(var - corrected) <= rel_tol * abs(corrected)
        stats.update({f"var[{key}]": var, f"printed_within_tol[{key}]": int(p_ok),
                      f"corrected_within_tol[{key}]": int(c_ok)})
        verdicts.append(Verdict.check(f"var[{key}]", var, corrected, rel_tol, "rel"))
        if j == 0:
            selected = {(True, True): "both", (True, False): "printed", (False, True): "corrected",
                        (False, False): "neither"}[(p_ok, c_ok)]
    stats["selected"] = selected
    config = {"experiment": "vervaat", "model": _model_config(model), "alpha": alphas, "n_paths": n_paths,
              "seed": seed, "truncation": _ctrl_config(ctrl), "rel_tol": rel_tol}
    return _report("vervaat", config, stats, verdicts, digest)


# --------------------------------------------------------------- limit process

def _integral_chunk(u, Y, delta, seed, n_total, lo):
    n = min(SAMPLE_CHUNK, n_total - lo)
    return sample_integral(u, Y, delta, n, seed, first_index=lo).values


def limit_process_check(u_grid, n_samples: int, seed: int, *, Y: float | None = None, delta: float | None = None,
                        jitter: float = 1e-12, rel_tol: float = 0.03, dump: bool = False, mapper=serial_map,
                        digest: str | None = None) -> ExperimentReport:
    """Covariances of both limit-process samplers against ``1/(u_i + u_j)`` and each other."""
    u = [float(x) for x in u_grid]
    dY, dd = integral_defaults(u)
    Y = dY if Y is None else float(Y)
    delta = dd if delta is None else float(delta)
    chunks = mapper(partial(_integral_chunk, u, Y, delta, seed, n_samples), range(0, n_samples, SAMPLE_CHUNK))
    vi = np.concatenate(chunks)
    chol = sample_cholesky(u, n_samples, seed, jitter)
    vc = chol.values
    exact = covariance_matrix(u)
    d = len(u)
    stats = {"integral_cov_error_bound": integral_error_bound(u, Y, delta),
             "cholesky_cov_error_bound": chol.cov_error_bound, "Y": Y, "delta": delta, "n_samples": n_samples}
    verdicts = []
    cov = {}
    for tag, v in (("integral", vi), ("cholesky", vc)):
        # second moments about the known mean 0
        c = np.array([[math.fsum(v[:, i] * v[:, j]) / len(v) for j in range(d)] for i in range(d)])
        cov[tag] = c
        for i in range(d):
            m = fmean(v[:, i])
            stats[f"{tag}_mean_z[u={_ukey(u[i])}]"] = m / math.sqrt(exact[i, i] / len(v))
            for j in range(i, d):
                key = f"{tag}_cov[{_ukey(u[i])},{_ukey(u[j])}]"
                stats[key] = float(c[i, j])
                verdicts.append(Verdict.check(key, c[i, j], exact[i, j], rel_tol, "rel"))
    for i in range(d):
        for j in range(i, d):
            rel = abs(cov["integral"][i, j] - cov["cholesky"][i, j]) / abs(cov["cholesky"][i, j])
            verdicts.append(Verdict.check(f"methods_rel_diff[{_ukey(u[i])},{_ukey(u[j])}]", rel, rel_tol, 0.0, "max"))
    tables = {}
    if dump:
        rows = [(s, u[j], float(vi[s, j])) for s in range(n_samples) for j in range(d)]
        tables["samples"] = (("sample_index", "u", "value"), rows)
    config = {"experiment": "limit-process-check", "u_grid": u, "n_samples": n_samples, "seed": seed, "Y": Y,
              "delta": delta, "jitter": jitter, "rel_tol": rel_tol}
    return _report("limit-process-check", config, stats, verdicts, digest, tables)
