import pytest

from perplab import Marginal, PairModel


@pytest.fixture
def exp_normal():
    return PairModel.independent(Marginal.exponential(1.0), Marginal.normal(0.0, 1.0))


@pytest.fixture
def exp_exp():
    return PairModel.independent(Marginal.exponential(1.0), Marginal.exponential(1.0))


@pytest.fixture
def unit_steps():
    return PairModel.degenerate(1.0, 1.0)
