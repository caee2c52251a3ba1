"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s -v``; the lines are
printed even when output capture is on.  Expect about half an hour on one
core, most of it in the iterated-logarithm scans.
"""

import math
import time
import warnings

import numpy as np
import pytest

from perplab import Marginal, PairModel, PathStream, evaluate, evaluate_grid, parts_identity_check
from perplab.harness.config import parse_config, with_overrides
from perplab.harness.runner import run
from perplab.perpetuity import brute_force, relative_discrepancy
from perplab.schedules import OverflowGuard, make_schedule
from perplab.stats.experiments import (
    clt_experiment,
    limit_process_check,
    slln_experiment,
    truncated_clt_experiment,
    vervaat_check,
)
from perplab.stats.lil import gaussian_envelope_probability, lil_experiment

pytestmark = pytest.mark.slow

SEED = 20261015
EXP1 = Marginal.exponential(1.0)
STD_NORMAL = Marginal.normal(0.0, 1.0)


@pytest.fixture
def report_line(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")
    return emit


def _failures(rep):
    return [f"{v.name}={v.observed!r} vs {v.target!r}" for v in rep.verdicts if not v.passed]


def test_criterion_01_slln(report_line):
    model = PairModel.independent(EXP1, EXP1)
    t0 = time.perf_counter()
    rep = slln_experiment(model, [0.999], 200, SEED)
    elapsed = time.perf_counter() - t0
    med = rep.statistics["median[b=0.999]"]
    ok = rep.passed and elapsed < 60.0
    report_line(1, "SLLN, exponential rewards", ok,
                f"median (1-b)X(b) = {med:.4f}, target 1, tol 5%, runtime {elapsed:.1f} s (< 60 s)")
    assert ok, _failures(rep)


def test_criterion_02_slln_unit_rewards(report_line):
    model = PairModel.independent(EXP1, Marginal.point(1.0))
    rep = slln_experiment(model, [0.999], 200, SEED)
    med = rep.statistics["median[b=0.999]"]
    report_line(2, "SLLN, unit rewards", rep.passed, f"median (1-b)X(b) = {med:.4f}, target 1/mu = 1, tol 5%")
    assert rep.passed, _failures(rep)


def test_criterion_03_clt_one_dimensional(report_line):
    model = PairModel.independent(EXP1, STD_NORMAL)
    attempts = []
    for seed in (SEED, SEED + 1):  # flake budget: one rerun
        rep = clt_experiment(model, 0.99, [1.0], 10_000, seed)
        attempts.append(rep)
        if rep.passed:
            break
    rep = attempts[-1]
    s = rep.statistics
    report_line(3, "one-dimensional CLT", rep.passed,
                f"variance {s['var[u=1]']:.4f} (target 1, tol 5%), KS {s['ks_distance']:.4f} (< 0.0163), "
                f"attempts {len(attempts)}")
    assert rep.passed, [_failures(r) for r in attempts]


def test_criterion_04_finite_dimensional_covariance(report_line):
    model = PairModel.independent(EXP1, STD_NORMAL)
    rep = clt_experiment(model, 0.99, [1.0, 2.0], 10_000, SEED)
    cov_ok = all(v.passed for v in rep.verdicts if v.name.startswith(("var[", "cov[")))
    s = rep.statistics
    report_line(4, "covariance across u", cov_ok,
                f"var(u=1) {s['var[u=1]']:.4f}/1, cov {s['cov[u=1,2]']:.4f}/{2 / 3:.4f}, "
                f"var(u=2) {s['var[u=2]']:.4f}/0.5, tol 7%")
    assert cov_ok, _failures(rep)


def test_criterion_05_truncated_clt(report_line):
    model = PairModel.independent(EXP1, STD_NORMAL)
    rep = truncated_clt_experiment(model, 0.99, 10_000, SEED)
    var_ok = rep.verdict("var").passed
    s = rep.statistics
    report_line(5, "truncated CLT", var_ok, f"M = {s['M']}, variance {s['var']:.4f} (target 1, tol 5%)")
    assert var_ok, _failures(rep)


def test_criterion_06_limit_process(report_line):
    rep = limit_process_check([0.5, 1.0, 2.0], 100_000, SEED)
    worst = max((v.observed - v.target) / v.target if v.rule == "rel" else v.observed for v in rep.verdicts
                if v.name.startswith(("integral", "cholesky")))
    diff = max(v.observed for v in rep.verdicts if v.name.startswith("methods_rel_diff"))
    report_line(6, "limit-process samplers", rep.passed,
                f"worst relative covariance error {worst:+.4f}, worst method disagreement {diff:.4f} (tol 3%)")
    assert rep.passed, _failures(rep)


VERVAAT_CONFIGS = {
    "degenerate steps, centred normal rewards": (PairModel.independent(Marginal.point(1.0), STD_NORMAL), "corrected"),
    "exponential steps, centred normal rewards": (PairModel.independent(EXP1, STD_NORMAL), "both"),
    "exponential steps, normal(1, 1) rewards": (PairModel.independent(EXP1, Marginal.normal(1.0, 1.0)), "both"),
    "exponential steps, unit rewards": (PairModel.independent(EXP1, Marginal.point(1.0)), "corrected"),
}


def test_criterion_07_vervaat(report_line):
    lines, ok = [], True
    for name, (model, expected) in VERVAAT_CONFIGS.items():
        rep = vervaat_check(model, [0.005], 10_000, SEED)
        s = rep.statistics
        sel = s["selected"]
        good = rep.passed and sel == expected
        ok &= good
        lines.append(f"{name}: var {s['var[alpha=0.005]']:.4f}, printed {s['v2_printed']:.3f}, "
                     f"corrected {s['v2_corrected']:.3f}, selected {sel}")
    report_line(7, "variance formula cross-check", ok, "; ".join(lines))
    assert ok, lines


def test_criterion_08_lil_property_suite(report_line):
    model = PairModel.independent(EXP1, STD_NORMAL)
    sched = make_schedule("inverse-square", 3162)
    rep = lil_experiment(model, sched, 100, SEED, keep_scans=False)
    s = rep.statistics
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverflowGuard)
        built_in = {"inverse-square": make_schedule("inverse-square", 10 ** 5),
                    "class-B": make_schedule("class-B", 10 ** 6),
                    "class-B-star": make_schedule("class-B-star", 200)}
    failed_conditions = [f"{k}:{c}" for k, sch in built_in.items() for c, r in sch.checks.items() if not r.passed]
    parts = {"envelope": rep.verdict("envelope_fraction").passed,
             "running max monotone": rep.verdict("running_extremes_monotone").passed,
             "coverage": rep.verdict("coverage_fraction").passed,
             "class conditions": not failed_conditions,
             "converged": rep.verdict("unconverged_levels").passed}
    ok = all(parts.values())
    reference = gaussian_envelope_probability(sched, 20_000, SEED)
    report_line(8, "iterated-logarithm property suite", ok,
                f"envelope fraction {s['envelope_fraction']:.2f} (>= 0.9; Gaussian reference probability "
                f"{reference:.3f}), coverage fraction "
                f"{s['coverage_fraction']:.2f} (>= 0.9 with coverage >= 0.5), "
                + ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in parts.items()))
    assert ok, (parts, failed_conditions, s)


def _random_config(rng):
    xi_choices = [
        lambda: Marginal.exponential(rng.uniform(0.5, 2.0)),
        lambda: Marginal.uniform(0.0, rng.uniform(1.0, 3.0)),
        lambda: Marginal.two_point(rng.uniform(0.1, 0.5), rng.uniform(1.0, 3.0), rng.uniform(0.2, 0.8)),
        lambda: Marginal.normal(rng.uniform(0.5, 1.5), rng.uniform(0.2, 2.0)),
        lambda: Marginal.point(rng.uniform(0.5, 2.0)),
    ]
    eta_choices = [
        lambda: Marginal.normal(rng.uniform(-1, 1), rng.uniform(0.1, 3.0)),
        lambda: Marginal.exponential(rng.uniform(0.5, 2.0)),
        lambda: Marginal.two_point(-1.0, rng.uniform(0.0, 5.0), rng.uniform(0.2, 0.8)),
        lambda: Marginal.uniform(-rng.uniform(0, 2), rng.uniform(0, 2) + 0.01),
        lambda: Marginal.point(rng.uniform(-3, 3)),
    ]
    xi = xi_choices[rng.integers(len(xi_choices))]()
    if rng.uniform() < 0.2:
        model = PairModel.linear_coupled(xi, rng.uniform(-1, 1), rng.uniform(-1, 1), Marginal.normal(0.0, 0.5))
    else:
        model = PairModel.independent(xi, eta_choices[rng.integers(len(eta_choices))]())
    one_minus_b = 10.0 ** rng.uniform(-3.0, math.log10(0.5))
    return model, 1.0 - one_minus_b, rng.uniform(0.5, 2.0)


def test_criterion_09_oracle_equivalence(report_line):
    rng = np.random.default_rng(SEED)
    n_cfg, within, failures = 1000, 0, []
    for i in range(n_cfg):
        model, b, u = _random_config(rng)
        stream = PathStream(model, SEED, i)
        v = evaluate(stream, b, u)
        ref = brute_force(stream, b, u, n_terms=1_000_000)
        gap = abs(v.value - ref)
        if gap <= v.tail_bound:
            within += 1
        else:
            failures.append({"config": i, "model": model.kind, "params": model.params, "b": b, "u": u,
                             "value": v.value, "brute_force": ref, "gap": gap, "tail_bound": v.tail_bound,
                             "k_star": v.k_star})
    frac = within / n_cfg
    ok = frac >= 0.995
    report_line(9, "evaluate against 10^6-term brute force", ok,
                f"{within}/{n_cfg} within tail_bound ({frac:.3f}, need >= 0.995)")
    for f in failures:
        print("certificate miss:", f)
    assert ok, failures


def _run_csvs(text, tmp_path, tag, workers):
    cfg = with_overrides(parse_config(text), out=str(tmp_path / tag))
    run(cfg, workers)
    return {p.name: p.read_bytes() for p in sorted((tmp_path / tag).iterdir()) if p.suffix == ".csv"}


DETERMINISM_CONFIGS = {
    "slln": 'experiment = "slln"\nn_paths = 50\nb = [0.99, 0.999]\n',
    "clt-fidi": 'experiment = "clt-fidi"\nn_paths = 500\nb = 0.99\nu = [1.0, 2.0]\n',
    "clt-truncated": 'experiment = "clt-truncated"\nn_paths = 500\nb = 0.99\n',
    "vervaat": 'experiment = "vervaat"\nn_paths = 300\nalpha = [0.01, 0.05]\n',
    "lil-scan": 'experiment = "lil-scan"\nn_paths = 4\n[schedule]\nn_max = 300\n',
    "limit-process-check": 'experiment = "limit-process-check"\nn_paths = 3000\ndump = true\n',
    "schedule": 'experiment = "schedule"\n[schedule]\nkind = "class-B"\nn_max = 1000\n',
}


def test_criterion_10_determinism(report_line, tmp_path):
    bad = []
    for name, text in DETERMINISM_CONFIGS.items():
        runs = [_run_csvs(text, tmp_path, f"{name}-{w}-{r}", w) for w in (1, 8) for r in range(2)]
        if not runs[0] or any(r != runs[0] for r in runs[1:]):
            bad.append(name)
    ok = not bad
    report_line(10, "determinism across reruns and worker counts 1 and 8", ok,
                f"{len(DETERMINISM_CONFIGS) - len(bad)}/{len(DETERMINISM_CONFIGS)} experiments byte-identical"
                + (f"; differing: {bad}" if bad else ""))
    assert ok, bad


def test_criterion_11_algebraic_identities(report_line):
    model = PairModel.independent(EXP1, STD_NORMAL)
    worst = 0.0
    for p in range(1000):
        lhs, rhs = parts_identity_check(PathStream(model, SEED, p), 0.999, 10_000)
        worst = max(worst, relative_discrepancy(lhs, rhs))
    bs, us = [0.9, 0.99, 0.999], [0.5, 1.0, 2.0]
    exact = True
    for p in range(20):
        grid = evaluate_grid(PathStream(model, SEED, p), bs, us)
        for i, b in enumerate(bs):
            for j, u in enumerate(us):
                single = evaluate(PathStream(model, SEED, p), b, u)
                exact &= grid[i][j].value == single.value and grid[i][j].k_star == single.k_star
    ok = worst < 1e-8 and exact
    report_line(11, "algebraic identities", ok,
                f"worst parts-identity discrepancy {worst:.2e} (< 1e-8), grid equals pointwise bit-exactly: {exact}")
    assert ok
