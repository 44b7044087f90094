import pytest

from src.deal_cashflows import NO_COLLATERAL, CollateralSpec, FundingSpec
from src.lsmc_engine import EngineSpec, PricingConfig
from src.market_model import LONG, SHORT, DealSpec, MarketParams

S0 = 100.0
STRIKE = 80.0
MATURITY = 3.0
RATE = 0.01
VOL = 0.25

collect_ignore = ["examples"]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full Monte Carlo reproductions of the published tables")


@pytest.fixture
def market():
    return MarketParams(spot=S0, rate=RATE, vol=VOL)


@pytest.fixture
def long_call():
    return DealSpec(strike=STRIKE, maturity=MATURITY, position=LONG)


@pytest.fixture
def short_call():
    return DealSpec(strike=STRIKE, maturity=MATURITY, position=SHORT)


@pytest.fixture
def classical_config(market, long_call):
    """Credit off, no collateral, funding at the risk-free rate."""
    return PricingConfig(
        params=market,
        deal=long_call,
        funding=FundingSpec.symmetric(RATE),
        collateral=CollateralSpec(policy=NO_COLLATERAL),
    )


@pytest.fixture
def fast_engine():
    return EngineSpec(hedge="risk_free")
