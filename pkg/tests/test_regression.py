import numpy as np
import pytest
from pytest_check import check

from src import regression
from src.errors import ConfigurationError, RegressionError
from src.regression import RegressionBasis


def test_recovers_exact_quadratic():
    x = np.linspace(50.0, 150.0, 40)
    y = 1.0 + 2.0 * x + 3.0 * x**2
    fit = regression.fit_regression(x, y)
    with check:
        assert fit.coefficients == pytest.approx([1.0, 2.0, 3.0], rel=1e-6, abs=1e-6)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.predict(np.array([100.0]))[0] == pytest.approx(30201.0)


def test_fit_preserves_the_mean():
    rng = np.random.default_rng(11)
    x = 100.0 * np.exp(0.25 * rng.standard_normal(500))
    y = np.maximum(x - 80.0, 0.0) + rng.normal(0.0, 5.0, 500)
    fit = regression.fit_regression(x, y, RegressionBasis(order=3))
    with check:
        assert fit.predict(x).mean() == pytest.approx(y.mean(), rel=1e-9)
        assert 0.0 < fit.r_squared < 1.0


def test_constant_target():
    x = np.linspace(1.0, 2.0, 10)
    fit = regression.fit_regression(x, np.full(10, 4.0))
    with check:
        assert fit.r_squared == 1.0
        assert fit.predict(x) == pytest.approx(np.full(10, 4.0))


def test_design_matrix():
    design = RegressionBasis(order=2).design([2.0, 3.0])
    assert design.tolist() == [[1.0, 2.0, 4.0], [1.0, 3.0, 9.0]]


def test_too_few_paths():
    with pytest.raises(RegressionError):
        regression.fit_regression([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])


def test_rank_deficient_design():
    with pytest.raises(RegressionError):
        regression.fit_regression(np.full(20, 5.0), np.arange(20.0))


def test_basis_validation():
    with check:
        with pytest.raises(ConfigurationError):
            RegressionBasis(order=0)
    with check:
        with pytest.raises(ConfigurationError):
            RegressionBasis(kind="laguerre")
    with pytest.raises(ConfigurationError):
        regression.fit_regression(np.ones((3, 2)), np.ones((3, 2)))


def test_default_basis():
    basis = RegressionBasis()
    with check:
        assert basis.order == 2
        assert basis.kind == regression.POWER_SERIES
        assert basis.size == 3
