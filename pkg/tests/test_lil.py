import math

import numpy as np
import pytest

from perplab import FixedPath, Marginal, PairModel, PathStream, evaluate
from perplab.perpetuity import TruncationControl
from perplab.schedules import make_schedule
from perplab.stats.lil import (
    cluster_bins,
    cluster_coverage,
    f_levels,
    lil_experiment,
    lil_path,
    lil_scan,
)


@pytest.fixture(scope="module")
def short_schedule():
    return make_schedule("inverse-square", 200)


@pytest.fixture(scope="module")
def model():
    return PairModel.independent(Marginal.exponential(1.0), Marginal.normal(0.0, 1.0))


def test_zero_rewards_give_zero(short_schedule):
    path = FixedPath(np.ones(10_000), np.zeros(10_000), mu=1.0, m=0.0, eta_abs_mean=0.0)
    lp = lil_path(path, short_schedule, 1.0, 1.0)
    assert np.all(lp.scaled == 0.0) and lp.max == 0.0 and lp.min == 0.0
    assert lp.coverage == 0.0


def test_levels_start_inside_domain(short_schedule):
    n, omb, fs = f_levels(short_schedule)
    assert np.all(omb * (2 - omb) < math.exp(-1.0))
    assert np.all(np.diff(fs) < 0)


def test_running_extremes_are_monotone(short_schedule, model):
    lp = lil_path(PathStream(model, 3, 0), short_schedule, 1.0, 1.0)
    assert np.all(np.diff(lp.running_max) >= 0) and np.all(np.diff(lp.running_min) <= 0)
    assert lp.converged.all()


def test_one_pass_matches_single_evaluations(short_schedule, model):
    lp = lil_path(PathStream(model, 5, 2), short_schedule, 1.0, 1.0)
    scale = math.sqrt(2.0)
    n, omb, fs = f_levels(short_schedule)
    for i in (0, len(n) // 2, len(n) - 1):
        tol = 1e-3 * scale / fs[i]
        v = evaluate(PathStream(model, 5, 2), 1.0 - omb[i], 1.0, TruncationControl(tol=tol, k_max=10 ** 9),
                     one_minus_b=omb[i])
        assert abs(v.value - lp.values[i]) <= 2 * tol
        assert abs(fs[i] * v.value / scale - lp.scaled[i]) <= 2.1e-3


def test_scan_matches_one_pass(short_schedule, model):
    rep = lil_scan(model, short_schedule, seed=5, path_index=2)
    lp = lil_path(PathStream(model, 5, 2), short_schedule, 1.0, 1.0)
    cols, rows = rep.tables["scan"]
    assert [r[4] for r in rows] == lp.scaled.tolist()
    assert rep.statistics["running_max"] == lp.max


def test_cluster_bins():
    assert cluster_bins([0.05, -0.05, 0.95, 1.0, -1.0]) == frozenset({0, -1, 9, -10})
    assert cluster_coverage([0.05, 0.25]) == pytest.approx(2 / 6)
    assert cluster_coverage(np.linspace(-1, 1, 401)) == 1.0


def test_small_experiment_is_deterministic(short_schedule, model):
    a = lil_experiment(model, short_schedule, 3, seed=1)
    b = lil_experiment(model, short_schedule, 3, seed=1)
    assert a.to_csv() == b.to_csv() and a.table_csv("scan_0002") == b.table_csv("scan_0002")
    assert a.verdict("running_extremes_monotone").passed


def test_requires_centered_model(short_schedule):
    with pytest.raises(ValueError):
        lil_scan(PairModel.independent(Marginal.exponential(1.0), Marginal.exponential(1.0)), short_schedule, 1)


def test_gaussian_reference_matches_scans(model):
    # a short schedule keeps both sides cheap; 200 paths give a standard error near 0.035
    from perplab.stats.lil import gaussian_envelope_probability
    sched = make_schedule("inverse-square", 100)
    ref = gaussian_envelope_probability(sched, 20_000, seed=1)
    rep = lil_experiment(model, sched, 200, seed=77, keep_scans=False)
    assert abs(rep.statistics["envelope_fraction"] - ref) < 0.12
