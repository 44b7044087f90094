"""
Deal cash flows:

Every adjusted cash-flow leg of a collateralized, funded deal seen from the
investor:

    gamma  - margining cost/benefit of the collateral account C
    phi    - funding cost/benefit of the cash account F
    theta  - on-default cash flow at the first-to-default time
    Pi_CVAcoll, Pi_DVAcoll - collateralized loss/benefit at default

Sign conventions: C > 0 means the investor holds collateral, F > 0 means the
investor borrows cash. x+ = max(x, 0) and x- = min(x, 0), so x = x+ + x-.

The margining and funding legs come in two flavours. FIRST_ORDER is the
cost-of-carry form C alpha (r - c~); BOND is the simple-compounding bond
ratio form C (1 - P(t_k, t_k+1) / P~(t_k, t_k+1)). Both agree to O(dt^2).
"""

import math

import attrs
import numpy as np

from src.credit_model import COUNTERPARTY, INVESTOR, DefaultScenario
from src.errors import ConfigurationError, PreconditionError
from src.market_model import DealSpec, MarketParams, TimeGrid, deal_value

FIRST_ORDER = "first_order"
BOND = "bond"
LEG_VARIANTS = (FIRST_ORDER, BOND)

TREASURY = "treasury"
MARKET = "market"

# what the treasury funds: the whole deal account Vbar - C' - H, or only the
# hedge and reused collateral -(H + C') with the premium carried at r
DEAL_ACCOUNT = "deal"
HEDGE_ACCOUNT = "hedge"
FUNDED_ACCOUNTS = (DEAL_ACCOUNT, HEDGE_ACCOUNT)

NO_COLLATERAL = "none"
RISK_FREE_COLLATERAL = "risk_free"

RISK_FREE_CLOSEOUT = "risk_free"
REPLACEMENT_CLOSEOUT = "replacement"


def _unit_interval(instance, attribute, value):
    if not 0.0 <= value <= 1.0:
        raise ConfigurationError("{} must lie in [0, 1], got {}".format(attribute.name, value))


def _finite(instance, attribute, value):
    if not math.isfinite(value):
        raise ConfigurationError("{} must be finite, got {}".format(attribute.name, value))


def _one_of(*choices):
    def check(instance, attribute, value):
        if value not in choices:
            raise ConfigurationError("{} must be one of {}, got {!r}".format(attribute.name, choices, value))

    return check


@attrs.frozen
class CollateralSpec:
    """
    Collateral agreement.

    :param policy: "none" (no collateral) or "risk_free" (C_t = V_t on every margin date)
    :param rate_pos: accrual rate c+ when the investor holds collateral
    :param rate_neg: accrual rate c- when the investor posts collateral
    :param rehypothecation: whether the taker may reuse the collateral for funding
    :param recovery_coll_i: R'_I, recovery on excess collateral held by a defaulted investor
    :param recovery_coll_c: R'_C, recovery on excess collateral held by a defaulted counterparty
    """

    policy: str = attrs.field(default=RISK_FREE_COLLATERAL, validator=_one_of(NO_COLLATERAL, RISK_FREE_COLLATERAL))
    rate_pos: float = attrs.field(default=0.01, converter=float, validator=_finite)
    rate_neg: float = attrs.field(default=0.01, converter=float, validator=_finite)
    rehypothecation: bool = False
    recovery_coll_i: float = attrs.field(default=1.0, converter=float, validator=_unit_interval)
    recovery_coll_c: float = attrs.field(default=1.0, converter=float, validator=_unit_interval)

    def __attrs_post_init__(self):
        if not self.rehypothecation and (self.recovery_coll_i != 1.0 or self.recovery_coll_c != 1.0):
            raise ConfigurationError("segregated collateral (no rehypothecation) must have R'_I = R'_C = 1")

    @property
    def enabled(self) -> bool:
        return self.policy != NO_COLLATERAL


@attrs.frozen
class FundingSpec:
    """
    Treasury or market funding of the hedge.

    :param rate_borrow: f+, paid when F > 0
    :param rate_lend: f-, earned when F < 0
    :param policy: "treasury" or "market"; market funding credit-adjusts the borrowing bond
    :param recovery_i: R_I used in the market-funding bond adjustment
    :param account: "deal" funds F = Vbar - C' - H; "hedge" funds F = -(H + C') only
    """

    rate_borrow: float = attrs.field(converter=float, validator=_finite)
    rate_lend: float = attrs.field(converter=float, validator=_finite)
    policy: str = attrs.field(default=TREASURY, validator=_one_of(TREASURY, MARKET))
    recovery_i: float = attrs.field(default=0.5, converter=float, validator=_unit_interval)
    account: str = attrs.field(default=DEAL_ACCOUNT, validator=_one_of(*FUNDED_ACCOUNTS))

    @classmethod
    def symmetric(cls, rate: float, policy: str = TREASURY, account: str = DEAL_ACCOUNT) -> "FundingSpec":
        return cls(rate_borrow=rate, rate_lend=rate, policy=policy, account=account)

    @property
    def midpoint(self) -> float:
        """Symmetrized rate f^ = (f+ + f-) / 2."""
        return 0.5 * (self.rate_borrow + self.rate_lend)

    @property
    def is_symmetric(self) -> bool:
        return self.rate_borrow == self.rate_lend

    def symmetrized(self, rate: float = None) -> "FundingSpec":
        rate = self.midpoint if rate is None else rate
        return attrs.evolve(self, rate_borrow=rate, rate_lend=rate)


@attrs.frozen
class RecoverySpec:
    """
    Loss-given-default of both parties on the deal and on excess collateral.
    """

    lgd_i: float = attrs.field(default=0.5, converter=float, validator=_unit_interval)
    lgd_c: float = attrs.field(default=0.5, converter=float, validator=_unit_interval)
    lgd_coll_i: float = attrs.field(default=0.0, converter=float, validator=_unit_interval)
    lgd_coll_c: float = attrs.field(default=0.0, converter=float, validator=_unit_interval)

    def __attrs_post_init__(self):
        if self.lgd_coll_i > self.lgd_i or self.lgd_coll_c > self.lgd_c:
            raise ConfigurationError("collateral LGD cannot exceed the deal LGD of the same party")

    @classmethod
    def build(cls, lgd_i: float, lgd_c: float, collateral: CollateralSpec) -> "RecoverySpec":
        """
        Combine deal LGDs with the collateral agreement

        :param lgd_i: 1 - R_I
        :param lgd_c: 1 - R_C
        :param collateral: agreement supplying R'_I, R'_C
        :return: RecoverySpec; LGD' vanishes without rehypothecation
        """
        return cls(
            lgd_i=lgd_i,
            lgd_c=lgd_c,
            lgd_coll_i=1.0 - collateral.recovery_coll_i,
            lgd_coll_c=1.0 - collateral.recovery_coll_c,
        )


@attrs.frozen
class CloseOutSpec:
    """
    Close-out convention: "risk_free" uses V, "replacement" uses the pre-default full price.
    """

    convention: str = attrs.field(
        default=RISK_FREE_CLOSEOUT, validator=_one_of(RISK_FREE_CLOSEOUT, REPLACEMENT_CLOSEOUT)
    )


def positive_part(x):
    return np.maximum(x, 0.0)


def negative_part(x):
    return np.minimum(x, 0.0)


def effective_collateral_rate(c_pos: float, c_neg: float, collateral):
    """
    Accrual rate selected by the sign of the collateral account

    :param c_pos: rate when the investor holds collateral
    :param c_neg: rate when the investor posts collateral (also used at zero)
    :param collateral: signed amount(s)
    :return: c+ where C > 0, c- elsewhere
    """
    rate = np.where(np.asarray(collateral) > 0, c_pos, c_neg)
    return float(rate) if rate.ndim == 0 else rate


def effective_funding_rate(f_pos: float, f_neg: float, funding):
    """
    Funding rate selected by the sign of the cash account

    :param f_pos: borrowing rate, F > 0
    :param f_neg: lending rate, F < 0 and F = 0
    :param funding: signed amount(s)
    :return: f+ where F > 0, f- elsewhere
    """
    rate = np.where(np.asarray(funding) > 0, f_pos, f_neg)
    return float(rate) if rate.ndim == 0 else rate


def simple_bond(rate, alpha):
    """Simple-compounding zero bond [1 + alpha rate]^-1."""
    return 1.0 / (1.0 + alpha * np.asarray(rate, dtype=float))


def carry_factor(rate: float, effective_rate, alpha: float, legs: str = FIRST_ORDER):
    """
    One-period cash flow per unit of account balance

    :param rate: risk-free rate r
    :param effective_rate: c~ or f~ for the period
    :param alpha: year fraction of the period
    :param legs: FIRST_ORDER or BOND
    :return: alpha (r - rate~) or 1 - P / P~
    """
    if legs == FIRST_ORDER:
        return alpha * (rate - np.asarray(effective_rate, dtype=float))
    if legs == BOND:
        return 1.0 - math.exp(-rate * alpha) / simple_bond(effective_rate, alpha)
    raise ConfigurationError("unknown leg variant {!r}".format(legs))


def _account_leg(balances, grid: TimeGrid, rate: float, rate_pos: float, rate_neg: float, stop, legs: str):
    alphas = grid.alphas
    balances = np.asarray(balances, dtype=float)
    n_periods = len(alphas)
    if balances.shape[-1] == n_periods + 1:
        balances = balances[..., :-1]
    elif balances.shape[-1] != n_periods:
        raise ConfigurationError(
            "account has {} dates but the grid has {} periods".format(balances.shape[-1], n_periods)
        )
    times = grid.times[:-1]
    live = times < (grid.horizon if stop is None else stop) - 1e-12
    discount = np.exp(-rate * times)
    effective = np.where(balances > 0, rate_pos, rate_neg)
    if legs == FIRST_ORDER:
        flows = balances * alphas * (rate - effective)
    elif legs == BOND:
        flows = balances * (1.0 - np.exp(-rate * alphas) / simple_bond(effective, alphas))
    else:
        raise ConfigurationError("unknown leg variant {!r}".format(legs))
    return np.sum(flows * discount * live, axis=-1)


def margining_leg(collateral, grid: TimeGrid, rate: float, c_pos: float, c_neg: float, stop=None, legs=FIRST_ORDER):
    """
    Discounted margining cash flows gamma(0, T ^ tau; C)

    :param collateral: C on each margin date (last date optional), one row per path
    :param grid: margin dates
    :param rate: risk-free rate r
    :param c_pos: accrual rate when C > 0
    :param c_neg: accrual rate when C <= 0
    :param stop: T ^ tau; dates at or after it carry no flow
    :param legs: FIRST_ORDER or BOND
    :return: sum over margin dates, per path
    """
    return _account_leg(collateral, grid, rate, c_pos, c_neg, stop, legs)


def funding_leg(funding, grid: TimeGrid, rate: float, f_pos: float, f_neg: float, stop=None, legs=FIRST_ORDER):
    """
    Discounted funding cash flows phi(0, T ^ tau; F)

    :param funding: F on each funding date (last date optional), one row per path
    :param grid: funding dates
    :param rate: risk-free rate r
    :param f_pos: borrowing rate
    :param f_neg: lending rate
    :param stop: T ^ tau
    :param legs: FIRST_ORDER or BOND
    :return: sum over funding dates, per path
    """
    return _account_leg(funding, grid, rate, f_pos, f_neg, stop, legs)


def _check_default(scenario: DefaultScenario):
    if not scenario.has_default:
        raise PreconditionError("{} has no default, there is no close-out".format(scenario.label))
    if scenario.first_defaulter not in (INVESTOR, COUNTERPARTY):
        raise PreconditionError("simultaneous default {} must be resolved first".format(scenario.label))


def cva_dva_integrands(eps, collateral, recoveries: RecoverySpec, eps_c=None):
    """
    Collateralized loss on counterparty default and benefit on investor default

    :param eps: close-out amount priced by the investor, eps_I
    :param collateral: pre-default collateral C_tau-
    :param recoveries: LGDs
    :param eps_c: close-out amount on investor default, eps_C; defaults to eps
    :return: (Pi_CVAcoll, Pi_DVAcoll), both >= 0
    """
    eps_i = np.asarray(eps, dtype=float)
    eps_c = eps_i if eps_c is None else np.asarray(eps_c, dtype=float)
    c_pos = positive_part(collateral)
    c_neg = negative_part(collateral)
    cva = recoveries.lgd_c * positive_part(positive_part(eps_i) - c_pos) + recoveries.lgd_coll_c * positive_part(
        negative_part(eps_i) - c_neg
    )
    dva = -(
        recoveries.lgd_i * negative_part(negative_part(eps_c) - c_neg)
        + recoveries.lgd_coll_i * negative_part(positive_part(eps_c) - c_pos)
    )
    return cva, dva


def close_out_payment(scenario: DefaultScenario, eps_i, eps_c, collateral, recoveries: RecoverySpec):
    """
    On-default cash flow theta_tau

    :param scenario: a default scenario with the first defaulter known
    :param eps_i: close-out priced by the investor on counterparty default
    :param eps_c: close-out priced by the counterparty on investor default
    :param collateral: pre-default collateral C_tau-
    :param recoveries: LGDs
    :return: eps_I - Pi_CVAcoll when the counterparty defaults first, eps_C + Pi_DVAcoll otherwise
    """
    _check_default(scenario)
    cva, dva = cva_dva_integrands(eps_i, collateral, recoveries, eps_c=eps_c)
    if scenario.first_defaulter == COUNTERPARTY:
        return np.asarray(eps_i, dtype=float) - cva
    return np.asarray(eps_c, dtype=float) + dva


def funding_dva_bond(p_borrow, survival: float, recovery_i: float):
    """
    Borrowing bond adjusted for the investor's own credit risk

    :param p_borrow: P^{f+}
    :param survival: probability the investor survives the funding period
    :param recovery_i: R_I
    :return: P^{f+} / (LGD_I survival + R_I)
    """
    denominator = (1.0 - recovery_i) * survival + recovery_i
    if denominator <= 0:
        raise PreconditionError("investor with zero recovery and zero survival has no funding bond")
    return np.asarray(p_borrow, dtype=float) / denominator


def market_borrow_rate(f_pos: float, alpha: float, survival: float, recovery_i: float) -> float:
    """
    Borrowing rate implied by the credit-adjusted funding bond

    :param f_pos: quoted borrowing rate
    :param alpha: period year fraction
    :param survival: investor survival over the period
    :param recovery_i: R_I
    :return: simple rate of funding_dva_bond(P^{f+})
    """
    adjusted = float(funding_dva_bond(simple_bond(f_pos, alpha), survival, recovery_i))
    return (1.0 / adjusted - 1.0) / alpha


def collateral_policy_value(
    deal: DealSpec, params: MarketParams, collateral: CollateralSpec, t: float, spot
):
    """
    Collateral account on a margin date

    :param deal: option position
    :param params: market parameters
    :param collateral: agreement
    :param t: margin date, not after maturity
    :param spot: stock price(s)
    :return: signed Black-Scholes price of the position, or zeros without collateral
    """
    if not collateral.enabled:
        return np.zeros_like(np.asarray(spot, dtype=float))
    return deal_value(deal, params, spot, t)
