import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pytest_check import check

from src import deal_cashflows
from src.credit_model import COUNTERPARTY, INVESTOR, DefaultScenario
from src.deal_cashflows import (
    BOND,
    DEAL_ACCOUNT,
    FIRST_ORDER,
    HEDGE_ACCOUNT,
    NO_COLLATERAL,
    CollateralSpec,
    FundingSpec,
    RecoverySpec,
)
from src.errors import ConfigurationError, PreconditionError
from src.market_model import TimeGrid, deal_value

amounts = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)
unit = st.floats(min_value=0.0, max_value=1.0)


def _recoveries(lgd_i, lgd_c, share_i, share_c):
    return RecoverySpec(lgd_i=lgd_i, lgd_c=lgd_c, lgd_coll_i=lgd_i * share_i, lgd_coll_c=lgd_c * share_c)


@given(amounts, amounts, unit, unit, unit, unit)
def test_integrands_are_non_negative(eps, collateral, lgd_i, lgd_c, share_i, share_c):
    cva, dva = deal_cashflows.cva_dva_integrands(eps, collateral, _recoveries(lgd_i, lgd_c, share_i, share_c))
    assert cva >= 0
    assert dva >= 0


def test_integrands_non_negative_on_random_grid():
    rng = np.random.default_rng(2024)
    n = 10000
    eps = rng.normal(0.0, 50.0, n)
    collateral = rng.normal(0.0, 50.0, n)
    eps_c = eps + rng.normal(0.0, 5.0, n)
    for lgd_i, lgd_c in rng.uniform(0.0, 1.0, (20, 2)):
        recoveries = _recoveries(lgd_i, lgd_c, *rng.uniform(0.0, 1.0, 2))
        cva, dva = deal_cashflows.cva_dva_integrands(eps, collateral, recoveries, eps_c=eps_c)
        with check:
            assert np.all(cva >= 0)
            assert np.all(dva >= 0)


def test_full_collateral_removes_credit_loss():
    eps = np.array([-30.0, -1.0, 0.0, 5.0, 40.0])
    cva, dva = deal_cashflows.cva_dva_integrands(eps, eps, RecoverySpec(lgd_i=0.5, lgd_c=0.5))
    with check:
        assert np.all(cva == 0)
        assert np.all(dva == 0)


def test_uncollateralized_integrands():
    recoveries = RecoverySpec(lgd_i=0.4, lgd_c=0.6)
    cva, dva = deal_cashflows.cva_dva_integrands(np.array([10.0, -10.0]), np.zeros(2), recoveries)
    with check:
        assert list(cva) == pytest.approx([6.0, 0.0])
        assert list(dva) == pytest.approx([0.0, 4.0])


def test_close_out_payment_reconciles_with_integrands():
    recoveries = RecoverySpec(lgd_i=0.5, lgd_c=0.5)
    eps = np.array([-20.0, 10.0, 30.0])
    collateral = np.array([-10.0, 0.0, 35.0])
    cva, dva = deal_cashflows.cva_dva_integrands(eps, collateral, recoveries)
    counterparty_first = DefaultScenario(tau_i=None, tau_c=1.0, first_defaulter=COUNTERPARTY)
    investor_first = DefaultScenario(tau_i=1.0, tau_c=2.0, first_defaulter=INVESTOR)
    with check:
        assert deal_cashflows.close_out_payment(counterparty_first, eps, eps, collateral, recoveries) == pytest.approx(
            eps - cva
        )
        assert deal_cashflows.close_out_payment(investor_first, eps, eps, collateral, recoveries) == pytest.approx(
            eps + dva
        )


def test_close_out_payment_preconditions():
    recoveries = RecoverySpec()
    with check:
        with pytest.raises(PreconditionError):
            deal_cashflows.close_out_payment(DefaultScenario(), 1.0, 1.0, 0.0, recoveries)
    with pytest.raises(PreconditionError):
        deal_cashflows.close_out_payment(DefaultScenario(tau_i=1.0, tau_c=1.0), 1.0, 1.0, 0.0, recoveries)


def test_effective_rates_lend_at_zero():
    with check:
        assert deal_cashflows.effective_funding_rate(0.03, 0.01, 0.0) == 0.01
        assert deal_cashflows.effective_funding_rate(0.03, 0.01, 5.0) == 0.03
        assert list(deal_cashflows.effective_collateral_rate(0.02, 0.01, np.array([-1.0, 1.0]))) == [0.01, 0.02]


def test_carry_factor():
    alpha = 1.0 / 12.0
    with check:
        assert deal_cashflows.carry_factor(0.01, 0.03, alpha, FIRST_ORDER) == pytest.approx(-0.02 / 12.0)
        assert deal_cashflows.carry_factor(0.01, 0.01, alpha, FIRST_ORDER) == 0.0
        assert abs(deal_cashflows.carry_factor(0.01, 0.01, alpha, BOND)) < 1e-6
        assert deal_cashflows.carry_factor(0.01, 0.03, alpha, BOND) == pytest.approx(
            1.0 - math.exp(-0.01 * alpha) * (1.0 + 0.03 * alpha)
        )
    with pytest.raises(ConfigurationError):
        deal_cashflows.carry_factor(0.01, 0.03, alpha, "exact")


def test_funding_leg():
    grid = TimeGrid.uniform(1.0, 0.25)
    balances = np.array([[10.0, 10.0, 10.0, 10.0], [-10.0, -10.0, -10.0, -10.0]])
    at_r = deal_cashflows.funding_leg(balances, grid, 0.01, 0.01, 0.01)
    costly = deal_cashflows.funding_leg(balances, grid, 0.01, 0.05, 0.0)
    with check:
        assert at_r == pytest.approx([0.0, 0.0])
        assert costly[0] < 0
        assert costly[1] < 0
    with pytest.raises(ConfigurationError):
        deal_cashflows.funding_leg(np.ones(3), grid, 0.01, 0.02, 0.0)


def test_legs_stop_at_default():
    grid = TimeGrid.uniform(1.0, 0.25)
    balances = np.ones(5)
    full = deal_cashflows.margining_leg(balances, grid, 0.01, 0.03, 0.03)
    stopped = deal_cashflows.margining_leg(balances, grid, 0.01, 0.03, 0.03, stop=0.5)
    expected = sum(0.25 * (0.01 - 0.03) * math.exp(-0.01 * t) for t in (0.0, 0.25))
    with check:
        assert stopped == pytest.approx(expected)
        assert full < stopped


def test_market_borrow_rate():
    alpha = 1.0 / 12.0
    with check:
        assert deal_cashflows.market_borrow_rate(0.03, alpha, 1.0, 0.4) == pytest.approx(0.03)
        assert deal_cashflows.market_borrow_rate(0.03, alpha, 0.99, 0.4) < 0.03
        assert deal_cashflows.funding_dva_bond(0.9, 1.0, 0.4) == pytest.approx(0.9)
    with pytest.raises(PreconditionError):
        deal_cashflows.funding_dva_bond(0.9, 0.0, 0.0)


def test_funding_spec():
    funding = FundingSpec(rate_borrow=0.03, rate_lend=0.01)
    with check:
        assert funding.midpoint == pytest.approx(0.02)
        assert not funding.is_symmetric
        assert funding.symmetrized().is_symmetric
        assert funding.symmetrized().rate_borrow == pytest.approx(0.02)
        assert funding.symmetrized(0.025).rate_lend == 0.025
        assert FundingSpec.symmetric(0.01).is_symmetric
        assert funding.account == DEAL_ACCOUNT
        assert FundingSpec(0.03, 0.01, account=HEDGE_ACCOUNT).symmetrized().account == HEDGE_ACCOUNT
        assert FundingSpec.symmetric(0.02, account=HEDGE_ACCOUNT).account == HEDGE_ACCOUNT
    with check:
        with pytest.raises(ConfigurationError):
            FundingSpec(rate_borrow=0.01, rate_lend=0.01, account="premium")
    with pytest.raises(ConfigurationError):
        FundingSpec(rate_borrow=0.01, rate_lend=0.01, policy="repo")


def test_recovery_and_collateral_specs():
    segregated = CollateralSpec()
    rehypothecated = CollateralSpec(rehypothecation=True, recovery_coll_i=0.5, recovery_coll_c=0.4)
    built = RecoverySpec.build(0.5, 0.6, rehypothecated)
    with check:
        assert RecoverySpec.build(0.5, 0.5, segregated).lgd_coll_i == 0.0
        assert built.lgd_coll_i == pytest.approx(0.5)
        assert built.lgd_coll_c == pytest.approx(0.6)
    with check:
        with pytest.raises(ConfigurationError):
            CollateralSpec(rehypothecation=False, recovery_coll_i=0.5)
    with pytest.raises(ConfigurationError):
        RecoverySpec(lgd_i=0.2, lgd_c=0.5, lgd_coll_i=0.3)


def test_collateral_policy_value(market, long_call):
    spots = np.array([90.0, 110.0])
    with check:
        assert np.all(
            deal_cashflows.collateral_policy_value(long_call, market, CollateralSpec(policy=NO_COLLATERAL), 1.0, spots)
            == 0
        )
        assert deal_cashflows.collateral_policy_value(long_call, market, CollateralSpec(), 1.0, spots) == pytest.approx(
            deal_value(long_call, market, spots, 1.0)
        )
