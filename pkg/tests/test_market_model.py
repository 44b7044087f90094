import math

import numpy as np
import pytest
from pytest_check import check

from src import market_model
from src.errors import ConfigurationError, DomainError
from src.market_model import LONG, SHORT, DealSpec, MarketParams, TimeGrid


def test_bs_price_reference():
    price = market_model.bs_price(100.0, 80.0, 0.01, 0.25, 0.0, 3.0)
    with check:
        assert abs(price - 28.9) < 0.05
        assert price == pytest.approx(28.879, abs=5e-3)


def test_bs_price_at_expiry_is_intrinsic():
    spots = np.array([50.0, 80.0, 120.0])
    with check:
        assert np.allclose(market_model.bs_price(spots, 80.0, 0.01, 0.25, 3.0, 3.0), [0.0, 0.0, 40.0])
        assert market_model.bs_price(120.0, 80.0, 0.01, 0.25, 3.0, 3.0) == 40.0


def test_bs_price_after_maturity_raises():
    with pytest.raises(DomainError):
        market_model.bs_price(100.0, 80.0, 0.01, 0.25, 3.5, 3.0)


def test_bs_price_zero_vol_is_deterministic():
    price = market_model.bs_price(100.0, 80.0, 0.01, 0.0, 0.0, 3.0)
    assert price == pytest.approx(100.0 - 80.0 * math.exp(-0.03))


def test_bs_price_zero_spot():
    assert market_model.bs_price(np.array([0.0]), 80.0, 0.01, 0.25, 0.0, 3.0)[0] == 0.0


def test_bs_delta_matches_finite_difference():
    h = 1e-4
    for spot in (60.0, 100.0, 140.0):
        up = market_model.bs_price(spot + h, 80.0, 0.01, 0.25, 0.5, 3.0)
        down = market_model.bs_price(spot - h, 80.0, 0.01, 0.25, 0.5, 3.0)
        with check:
            assert market_model.bs_delta(spot, 80.0, 0.01, 0.25, 0.5, 3.0) == pytest.approx(
                (up - down) / (2 * h), abs=1e-6
            )


def test_bs_delta_at_expiry():
    deltas = market_model.bs_delta(np.array([70.0, 90.0]), 80.0, 0.01, 0.25, 3.0, 3.0)
    assert list(deltas) == [0.0, 1.0]


def test_discount_factor():
    with check:
        assert market_model.discount_factor(0.01, 0.0, 3.0) == pytest.approx(math.exp(-0.03))
        assert market_model.discount_factor(0.01, 1.0, 1.0) == 1.0
    with pytest.raises(DomainError):
        market_model.discount_factor(0.01, 2.0, 1.0)


def test_market_params_validation():
    with check:
        with pytest.raises(ConfigurationError):
            MarketParams(spot=0.0, rate=0.01, vol=0.25)
    with check:
        with pytest.raises(ConfigurationError):
            MarketParams(spot=100.0, rate=0.01, vol=-0.1)
    with check:
        with pytest.raises(ConfigurationError):
            MarketParams(spot=100.0, rate=float("nan"), vol=0.25)
    assert MarketParams(spot=100.0, rate=0.01, vol=0.25).with_rate(0.05).rate == 0.05


def test_deal_spec():
    deal = DealSpec(strike=80.0, maturity=3.0, position=SHORT)
    with check:
        assert list(deal.payoff(np.array([70.0, 100.0]))) == [0.0, -20.0]
        assert deal.flipped().position == LONG
    with pytest.raises(ConfigurationError):
        DealSpec(strike=80.0, maturity=3.0, position=2)


def test_deal_value_is_signed(market, long_call, short_call):
    with check:
        assert market_model.deal_value(short_call, market, 100.0, 0.0) == pytest.approx(
            -market_model.deal_value(long_call, market, 100.0, 0.0)
        )
        assert market_model.deal_delta(short_call, market, 100.0, 0.0) < 0


def test_time_grid_uniform():
    grid = TimeGrid.uniform(3.0, 1.0 / 12.0)
    with check:
        assert len(grid) == 37
        assert grid.horizon == 3.0
        assert grid.alphas == pytest.approx(np.full(36, 1.0 / 12.0))
        assert grid.step == pytest.approx(1.0 / 12.0)


def test_time_grid_truncate():
    grid = TimeGrid.uniform(3.0, 1.0 / 12.0)
    with check:
        assert grid.truncate(None) is grid
        assert grid.truncate(3.0) is grid
        assert len(grid.truncate(1.0)) == 13
        assert grid.truncate(1.0).horizon == pytest.approx(1.0)
        assert grid.truncate(1.01).horizon == pytest.approx(13.0 / 12.0)


def test_time_grid_validation():
    with check:
        with pytest.raises(ConfigurationError):
            TimeGrid([0.0])
    with check:
        with pytest.raises(ConfigurationError):
            TimeGrid([0.5, 1.0])
    with check:
        with pytest.raises(ConfigurationError):
            TimeGrid([0.0, 1.0, 1.0])
    with check:
        with pytest.raises(ConfigurationError):
            TimeGrid.uniform(3.0, 0.0)
    with pytest.raises(ConfigurationError):
        TimeGrid.uniform(1.0, 0.25).index_at_or_after(2.0)


def test_simulate_gbm_paths_shape_and_seed(market):
    grid = TimeGrid.uniform(3.0, 0.25)
    paths = market_model.simulate_gbm_paths(market, grid, 50, seed=7)
    again = market_model.simulate_gbm_paths(market, grid, 50, seed=7)
    other = market_model.simulate_gbm_paths(market, grid, 50, seed=8)
    with check:
        assert paths.values.shape == (50, 13)
        assert np.all(paths.column(0) == 100.0)
        assert np.all(paths.values > 0)
        assert np.array_equal(paths.values, again.values)
        assert not np.array_equal(paths.values, other.values)


def test_simulate_gbm_paths_martingale(market):
    grid = TimeGrid.uniform(3.0, 1.0)
    paths = market_model.simulate_gbm_paths(market, grid, 10000, seed=42)
    discounted = math.exp(-market.rate * 3.0) * paths.values[:, -1]
    se = discounted.std(ddof=1) / math.sqrt(len(discounted))
    assert abs(discounted.mean() - market.spot) < 4 * se


def test_simulate_gbm_paths_antithetic(market):
    grid = TimeGrid.uniform(1.0, 0.25)
    paths = market_model.simulate_gbm_paths(market, grid, 4, seed=3, antithetic=True)
    drift = np.cumsum((market.rate - 0.5 * market.vol**2) * grid.alphas)
    log_mid = np.log(paths.values[:, 1:]) - math.log(market.spot)
    assert np.allclose(log_mid[0] + log_mid[1], 2 * drift)


def test_simulate_gbm_paths_rejects_bad_input(market):
    grid = TimeGrid.uniform(1.0, 0.25)
    with check:
        with pytest.raises(ConfigurationError):
            market_model.simulate_gbm_paths(market, grid, 1, seed=1)
    with pytest.raises(ConfigurationError):
        market_model.simulate_gbm_paths(market, [0.0, 1.0], 10, seed=1)
