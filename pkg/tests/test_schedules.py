import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perplab.schedules import (
    F_LOWER,
    DomainError,
    IndexFunctions,
    OverflowGuard,
    bstar_log_D,
    check_class,
    class_b_condition_b,
    f_scale,
    from_values,
    index_N1,
    index_N2,
    index_N2delta,
    index_Ndelta,
    make_schedule,
    schedule_csv,
)


def mp_f(one_minus_b):
    with mpmath.workdps(60):
        omb = mpmath.mpf(one_minus_b)
        z = omb * (2 - omb)
        return (2 / z * mpmath.log(mpmath.log(1 / z))) ** mpmath.mpf(-0.5)


@pytest.fixture(scope="module")
def schedules():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverflowGuard)
        return {"inverse-square": make_schedule("inverse-square", 10 ** 5),
                "class-B": make_schedule("class-B", 10 ** 6),
                "class-B-star": make_schedule("class-B-star", 200)}


def test_f_scale_at_e_to_the_e():
    b = math.sqrt(1.0 - math.exp(-math.e))
    assert f_scale(b) == pytest.approx((2 * math.exp(math.e)) ** -0.5, rel=1e-12)
    # the closed form is 0.1816426; the commonly quoted 0.181636 agrees to 1e-5
    assert f_scale(b) == pytest.approx(0.181636, abs=1e-5)


def test_f_scale_boundary():
    with pytest.raises(DomainError):
        f_scale(math.sqrt(1.0 - math.exp(-1.0)))
    with pytest.raises(DomainError):
        f_scale(0.5)
    with pytest.raises(DomainError):
        f_scale(1.0)


def test_f_scale_high_precision_oracle():
    assert f_scale(0.999) == pytest.approx(float(mp_f(mpmath.mpf(1) - mpmath.mpf("0.999"))), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(e=st.floats(0.5, 18.0))
def test_f_scale_matches_oracle_via_one_minus_b(e):
    omb = 10.0 ** -e
    if 1 - omb <= F_LOWER:
        return
    assert f_scale(1.0 - omb, one_minus_b=omb) == pytest.approx(float(mp_f(omb)), rel=1e-12)


def test_index_examples():
    # 1 - b^2 = 0.01
    assert index_N2(math.sqrt(0.99)) == 460
    # 1 - b^(2 delta) = 0.01 with delta = 1/2 means 1 - b = 0.01
    assert index_N1(0.99, 0.5, 1.0) == 305
    assert index_N2delta(0.99, 0.5) == 460
    assert index_Ndelta(0.99, 0.5) == 99 or index_Ndelta(0.99, 0.5) == 100


def test_index_functions_domain():
    with pytest.raises(DomainError):
        index_N1(0.3, 0.5, 1.0)
    with pytest.raises(DomainError):
        IndexFunctions(delta=1.5)


def test_index_functions_nondecreasing():
    grid = 1.0 - np.geomspace(0.5, 1e-9, 1000)
    idx = IndexFunctions(0.7, 0.3)
    for fn in (idx.N2, idx.N2delta, idx.Ndelta):
        vals = [fn(b, 1.0 - b) for b in grid]
        assert all(a <= c for a, c in zip(vals, vals[1:]))
    vals = [idx.N1(b, 1.0 - b) for b in grid if 1.0 - b < 0.05]
    assert all(a <= c for a, c in zip(vals, vals[1:]))


def test_N1_times_f_squared():
    omb = 1e-8
    prod = index_N1(1 - omb, 0.9, 0.1, one_minus_b=omb) * f_scale(1 - omb, one_minus_b=omb) ** 2
    assert prod == pytest.approx(1.1 / 1.8, rel=0.01)


def test_inverse_square_values(schedules):
    s = schedules["inverse-square"]
    assert s.b[9] == pytest.approx(0.99, abs=1e-15)
    assert s.class_tag == "plain"


@pytest.mark.parametrize("kind", ["inverse-square", "class-B", "class-B-star"])
def test_schedules_strictly_increasing(schedules, kind):
    s = schedules[kind]
    assert np.all(np.diff(s.ell) > 0) and np.all(s.one_minus_b > 0) and s.b[0] == 0.5


@pytest.mark.parametrize("kind", ["inverse-square", "class-B", "class-B-star"])
def test_all_class_conditions_pass(schedules, kind):
    for name, rep in schedules[kind].checks.items():
        assert rep.passed, (kind, name, rep.statistics)


def test_constant_input_rejected():
    with pytest.raises(ValueError):
        from_values([0.9, 0.9, 0.95])


def test_inverse_square_series_flattens(schedules):
    rep = schedules["inverse-square"].checks["aux1"]
    assert rep.statistics["tail_increment"] < 1e-8


def test_inverse_square_ratio(schedules):
    s = schedules["inverse-square"]
    ratio = lambda n: s.one_minus_b[n] / s.one_minus_b[n - 1]  # (1-b_{n+1})/(1-b_n)
    # the ratio is n^2/(n+1)^2 = 1 - 2/n + O(n^-2)
    assert abs(ratio(10 ** 4) - 1) < 2.1e-4
    assert abs(ratio(2 * 10 ** 4) - 1) < 1e-4


def test_class_b_condition_b_oracle(schedules):
    rep = schedules["class-B"].checks["b"]
    for n in (10 ** 3, 10 ** 6 - 1):
        i = int(np.searchsorted(rep.n, n))
        assert rep.values[i] == pytest.approx(class_b_condition_b(n), rel=1e-6)


def test_class_b_condition_b_decays_past_its_peak():
    at_1e3 = class_b_condition_b(10 ** 3)
    # still rising at 1e6; the decay sets in near 1.2e6 and is logarithmically slow
    assert class_b_condition_b(10 ** 6) > at_1e3
    assert class_b_condition_b(10 ** 8) < class_b_condition_b(10 ** 7) < class_b_condition_b(2 * 10 ** 6)
    assert class_b_condition_b(10 ** 20) < at_1e3


def test_class_b_star_truncates_with_warning():
    with pytest.warns(OverflowGuard):
        s = make_schedule("class-B-star", 200)
    assert s.truncated_at == len(s) and s.ell[-1] <= 700.0


def test_class_b_star_condition_b_holds_from_n0(schedules):
    rep = schedules["class-B-star"].checks["b"]
    assert rep.n0 is not None
    assert np.all(rep.values[rep.n >= rep.n0] >= 0.0)


def test_class_b_star_condition_a_trend(schedules):
    rep = schedules["class-B-star"].checks["a"]
    tail = rep.values[rep.n >= 10]
    assert np.all(np.diff(tail) < 0)


def test_bstar_log_D_matches_mpmath():
    for n in (5, 40, 150):
        with mpmath.workdps(40):
            exact = mpmath.loggamma(n + 1) + sum(2 * mpmath.log(mpmath.log(j)) for j in range(2, n + 1)) \
                + sum(mpmath.log(mpmath.log(mpmath.log(k))) for k in range(3, n + 1))
        assert bstar_log_D([n])[0] == pytest.approx(float(exact), rel=1e-12)


def test_check_class_unknown_condition(schedules):
    with pytest.raises(ValueError):
        check_class(schedules["inverse-square"], "c")


def test_make_schedule_validation():
    with pytest.raises(ValueError):
        make_schedule("inverse-square", 5)
    with pytest.raises(ValueError):
        make_schedule("geometric", 100)


def test_schedule_csv_columns(schedules):
    text = schedule_csv(make_schedule("inverse-square", 20))
    header = text.splitlines()[0].split(",")
    assert header[:4] == ["n", "b", "one_minus_b", "ell"]
    assert len(text.splitlines()) == 21
