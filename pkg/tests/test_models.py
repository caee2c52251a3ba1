import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perplab import Marginal, PairModel, RngState, moments, sample_pair
from perplab.models import sample_block
from perplab.rng import block_generator

FAMILIES = {
    "normal": PairModel.independent(Marginal.normal(1.0, 1.0), Marginal.normal(0.0, 1.0)),
    "exp-two-point": PairModel.independent(Marginal.exponential(2.0), Marginal.two_point(-1.0, 3.0, 0.25)),
    "uniform": PairModel.independent(Marginal.uniform(0.5, 1.5), Marginal.uniform(-2.0, 1.0)),
    "linear": PairModel.linear_coupled(Marginal.exponential(1.0), 2.0, -1.0, Marginal.normal(0.0, 0.5)),
    "table": PairModel.user_table([(1.0, 2.0, 0.3), (2.0, -1.0, 0.5), (0.5, 0.0, 0.2)]),
}


def test_degenerate_moments():
    assert moments(PairModel.degenerate(2.0, 3.0)) == (2.0, 3.0, 0.0, 0.0, 0.0)


def test_independent_normal_moments():
    m = PairModel.independent(Marginal.normal(1.0, 1.0), Marginal.normal(0.0, 1.0))
    assert moments(m) == (1.0, 0.0, 1.0, 1.0, 0.0)


def test_linear_coupled_moments_against_quadrature():
    from scipy import integrate
    m = PairModel.linear_coupled(Marginal.exponential(1.0), 1.0, -1.0)
    assert moments(m) == pytest.approx((1.0, 0.0, 1.0, 1.0, 1.0), rel=1e-12)
    # gamma = E xi (xi - 1) - mu m by direct integration against the Exp(1) density
    exy, _ = integrate.quad(lambda x: x * (x - 1.0) * math.exp(-x), 0.0, math.inf)
    assert m.gamma == pytest.approx(exy - m.mu * m.m, abs=1e-10)


def test_table_moments_closed_form():
    m = FAMILIES["table"]
    rows = np.array(m.table)
    x, y, p = rows.T
    assert m.mu == pytest.approx(p @ x, rel=1e-12)
    assert m.s2 == pytest.approx(p @ (y - p @ y) ** 2, rel=1e-12)
    assert m.gamma == pytest.approx(p @ (x * y) - (p @ x) * (p @ y), rel=1e-12)


@pytest.mark.parametrize("bad", [
    lambda: PairModel.degenerate(0.0, 1.0),
    lambda: PairModel.independent(Marginal.normal(-1.0, 1.0), Marginal.normal()),
    lambda: PairModel.user_table([(1.0, 1.0, 0.5)]),
    lambda: Marginal.exponential(0.0),
    lambda: Marginal.uniform(1.0, 1.0),
    lambda: Marginal("cauchy", (0.0,)),
])
def test_malformed_models_rejected(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_empirical_moments_within_five_standard_errors(name):
    model = FAMILIES[name]
    xi, eta = model.sample_block(block_generator(99, 0, 0), 10 ** 6)
    n = len(xi)
    for sample, mean, var in ((xi, model.mu, model.sigma2), (eta, model.m, model.s2)):
        assert abs(sample.mean() - mean) <= 5 * math.sqrt(var / n) + 1e-12
        m4 = np.mean((sample - mean) ** 4)
        assert abs(sample.var() - var) <= 5 * math.sqrt(max(m4 - var * var, 0.0) / n) + 1e-12
    cov = np.mean((xi - model.mu) * (eta - model.m))
    assert abs(cov - model.gamma) <= 5 * math.sqrt(np.var((xi - model.mu) * (eta - model.m)) / n) + 1e-12


def test_eta_abs_mean_is_upper_bound_for_linear():
    model = FAMILIES["linear"]
    xi, eta = model.sample_block(block_generator(3, 0, 0), 10 ** 5)
    assert np.mean(np.abs(eta)) <= model.eta_abs_mean


def test_sample_pair_degenerate():
    (x, e), state = sample_pair(PairModel.degenerate(1.0, 0.0), RngState(4))
    assert (x, e) == (1.0, 0.0) and state.counter == 1


def test_linear_coupling_identity_exact():
    model = PairModel.linear_coupled(Marginal.exponential(1.0), 1.0, -1.0)
    xi, eta = sample_block(model, 11, 0, 0)
    assert np.array_equal(eta, xi - 1.0)
    state = RngState(11)
    for _ in range(50):
        (x, e), state = sample_pair(model, state)
        assert e == x - 1.0


def test_sample_pair_mean_of_million(exp_normal):
    xi, _ = sample_block(exp_normal, 1, 0, 0)
    draws = [xi]
    for q in range(1, 31):
        draws.append(sample_block(exp_normal, 1, 0, q)[0])
    x = np.concatenate(draws)[:10 ** 6]
    assert abs(x.mean() - 1.0) < 0.005


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 63), counter=st.integers(0, 10 ** 6))
def test_equal_states_give_identical_pairs(seed, counter):
    model = FAMILIES["exp-two-point"]
    a, sa = sample_pair(model, RngState(seed, 3, counter))
    b, sb = sample_pair(model, RngState(seed, 3, counter))
    assert a == b and sa == sb


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-3, 3), c=st.floats(-3, 3), rate=st.floats(0.2, 5), sd=st.floats(0, 2))
def test_linear_coupled_moment_formulas(a, c, rate, sd):
    m = PairModel.linear_coupled(Marginal.exponential(rate), a, c, Marginal.normal(0.0, sd))
    assert m.mu == pytest.approx(1 / rate)
    assert m.m == pytest.approx(a / rate + c)
    assert m.s2 == pytest.approx(a * a / rate ** 2 + sd * sd)
    assert m.gamma == pytest.approx(a / rate ** 2)
    assert m.sigma2 >= 0 and m.s2 >= 0
