"""
Valuation adjustments:

Splits a solved price into

    Vbar = V - CVA + DVA + LVA + FVA

computes the three shortcut FVA methods used by the industry for a
symmetric funding rate, and the Non-linearity Valuation Adjustment

    NVA = Vbar(f+, f-, configured close-out) - Vhat(f^, risk-free close-out)
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import attrs
import numpy as np
from scipy import integrate
from scipy.stats import norm

from src.credit_model import COUNTERPARTY, INVESTOR
from src.deal_cashflows import RISK_FREE_CLOSEOUT, CloseOutSpec, FundingSpec
from src.diagnostics import debug
from src.errors import ConfigurationError, QuadratureError
from src.lsmc_engine import PricingConfig, ValuationResult, classical_price, price_deal
from src.market_model import GRID_TOLERANCE, DealSpec, MarketParams, bs_price, deal_value

log = logging.getLogger(__name__)

QUAD_TOLERANCE = 1e-9
QUAD_LIMIT = 200
ADJUSTMENT_PARTS = ("cva", "dva", "lva", "fva", "closeout", "clean")


@attrs.define
class AdjustmentReport:
    """
    Decomposition of a full price.

    :param v_clean: Black-Scholes price of the deal
    :param cva: discounted collateralized loss on counterparty default, >= 0
    :param dva: discounted collateralized benefit on investor default, >= 0
    :param lva: discounted margining cash flows
    :param fva: discounted funding cash flows
    :param v_bar: full price
    :param closeout_adjustment: replacement minus risk-free close-out, zero under risk-free close-out
    :param v_clean_mc: Monte Carlo estimate of v_clean on the run's paths
    :param nva: filled by compute_nva
    :param errors: standard error of each Monte Carlo part, keyed by ADJUSTMENT_PARTS
    """

    v_clean: float
    cva: float
    dva: float
    lva: float
    fva: float
    v_bar: float
    std_error: float = 0.0
    closeout_adjustment: float = 0.0
    v_clean_mc: float = 0.0
    clean_std_error: float = 0.0
    nva: float = None
    errors: dict = attrs.Factory(dict)

    @property
    def identity_residual(self) -> float:
        return self.v_bar - (
            self.v_clean - self.cva + self.dva + self.lva + self.fva + self.closeout_adjustment
        )

    @property
    def identity_tolerance(self) -> float:
        """Three combined standard errors of the full and the clean estimate."""
        return 3.0 * math.hypot(self.std_error, self.clean_std_error)

    def identity_holds(self) -> bool:
        return abs(self.identity_residual) <= self.identity_tolerance + GRID_TOLERANCE


@attrs.define
class NvaResult:
    full: ValuationResult
    simplified: ValuationResult
    nva: float
    std_error: float
    rate: float

    @property
    def percentage(self) -> float:
        """|NVA| as a percentage of the full price."""
        return 100.0 * abs(self.nva) / abs(self.full.price) if self.full.price else float("nan")


def _weighted(values, errors, weights):
    values, errors, weights = (np.asarray(a, dtype=float) for a in (values, errors, weights))
    return float(weights @ values), float(np.sqrt(np.sum((weights * errors) ** 2)))


def _weighted_paths(arrays, weights):
    means = [float(np.mean(a)) for a in arrays]
    errors = [float(np.std(a, ddof=1) / math.sqrt(len(a))) for a in arrays]
    return _weighted(means, errors, weights)


def decompose(result: ValuationResult) -> AdjustmentReport:
    """
    Split a price_deal run into CVA, DVA, LVA and FVA

    :param result: completed run with its backward states
    :return: AdjustmentReport, also stored on result.adjustments
    :raises ConfigurationError: when the run carries no solved paths
    """
    if not result.runs or any(run.state is None for run in result.runs):
        raise ConfigurationError("decompose needs a run with stored paths")
    config = result.config
    r = config.params.rate
    neglect = config.engine.neglect_first_to_default
    horizon = config.deal.maturity + GRID_TOLERANCE

    pathwise = {name: [] for name in ADJUSTMENT_PARTS}
    weights = []
    for run in result.runs:
        state, scenario = run.state, run.scenario
        n = state.n_paths
        start_discount = np.exp(-r * state.grid.times[:-1])
        pathwise["lva"].append((state.collateral * state.collateral_carry) @ start_discount)
        pathwise["fva"].append((state.funding * state.funding_carry) @ start_discount)

        if state.tau is None:
            clean = math.exp(-r * state.grid.horizon) * state.payoff
            cva = dva = adjust = np.zeros(n)
        else:
            tau_discount = math.exp(-r * state.tau)
            close_date = state.grid.horizon
            risk_free = deal_value(config.deal, config.params, state.spot[:, -1], close_date)
            clean = tau_discount * risk_free
            adjust = tau_discount * (state.closeout_amount - risk_free)
            if neglect:
                cva_on = scenario.defaults_before(COUNTERPARTY, horizon)
                dva_on = scenario.defaults_before(INVESTOR, horizon)
            else:
                cva_on = scenario.first_defaulter == COUNTERPARTY
                dva_on = scenario.first_defaulter == INVESTOR
            cva = tau_discount * state.cva_loss * cva_on
            dva = tau_discount * state.dva_gain * dva_on

        if run.control is not None:
            clean = clean - run.control_beta * run.control

        pathwise["cva"].append(np.broadcast_to(cva, (n,)))
        pathwise["dva"].append(np.broadcast_to(dva, (n,)))
        pathwise["closeout"].append(np.broadcast_to(adjust, (n,)))
        pathwise["clean"].append(clean)
        weights.append(scenario.weight)

    estimates = {name: _weighted_paths(arrays, weights) for name, arrays in pathwise.items()}
    report = AdjustmentReport(
        v_clean=classical_price(config),
        cva=estimates["cva"][0],
        dva=estimates["dva"][0],
        lva=estimates["lva"][0],
        fva=estimates["fva"][0],
        v_bar=result.price,
        std_error=result.std_error,
        closeout_adjustment=estimates["closeout"][0],
        v_clean_mc=estimates["clean"][0],
        clean_std_error=estimates["clean"][1],
        errors={name: se for name, (_, se) in estimates.items()},
    )
    debug(
        "decomposition: V={:.4f} CVA={:.4f} DVA={:.4f} LVA={:.4f} FVA={:.4f} residual={:.4f}".format(
            report.v_clean, report.cva, report.dva, report.lva, report.fva, report.identity_residual
        ),
        1,
    )
    if not report.identity_holds():
        log.warning(
            "decomposition residual %.4f exceeds %.4f", report.identity_residual, report.identity_tolerance
        )
    result.adjustments = report
    return report


def fva_method_i(params: MarketParams, deal: DealSpec, f_hat: float) -> float:
    """
    Black-Scholes price discounted once more at the funding rate

    :param params: market parameters
    :param deal: option position
    :param f_hat: symmetric funding rate, continuously compounded
    :return: exp(-f^ T) times the signed Black-Scholes price
    """
    return math.exp(-f_hat * deal.maturity) * deal_value(deal, params, params.spot, 0.0)


def fva_method_ii(params: MarketParams, deal: DealSpec, f_hat: float) -> float:
    """
    Black-Scholes price with growth and discounting at the funding rate

    :param params: market parameters
    :param deal: option position
    :param f_hat: symmetric funding rate
    :return: signed Black-Scholes price with r replaced by f^
    """
    return deal.position * bs_price(params.spot, deal.strike, f_hat, params.vol, 0.0, deal.maturity)


def expected_exercise_probability(params: MarketParams, deal: DealSpec, s: float) -> float:
    """
    E_0[Phi(d2(s, S_s))] under the risk-neutral law of S_s

    :param params: market parameters
    :param deal: option position
    :param s: time in [0, T]
    :return: expectation by quadrature over the standard normal driving S_s
    """
    remaining = deal.maturity - s
    if params.vol <= 0:
        forward = params.spot * math.exp(params.rate * deal.maturity)
        return float(forward > deal.strike)
    if remaining <= GRID_TOLERANCE:
        # Phi(d2) at expiry is the exercise indicator, its expectation P(S_T > K)
        total_vol = params.vol * math.sqrt(deal.maturity)
        drift = (params.rate - 0.5 * params.vol**2) * deal.maturity
        return float(norm.cdf((math.log(params.spot / deal.strike) + drift) / total_vol))
    drift = (params.rate - 0.5 * params.vol**2) * s
    vol_s = params.vol * math.sqrt(s)
    vol_rem = params.vol * math.sqrt(remaining)

    def integrand(z):
        log_moneyness = math.log(params.spot / deal.strike) + drift + vol_s * z
        d2 = (log_moneyness + (params.rate - 0.5 * params.vol**2) * remaining) / vol_rem
        return norm.cdf(d2) * norm.pdf(z)

    value, error = integrate.quad(integrand, -np.inf, np.inf, epsabs=QUAD_TOLERANCE, limit=QUAD_LIMIT)
    if error > 1e3 * QUAD_TOLERANCE:
        raise QuadratureError("inner expectation at s={} did not converge (error {})".format(s, error))
    return value


def fva_method_iii(params: MarketParams, deal: DealSpec, f_hat: float, limit: int = QUAD_LIMIT) -> float:
    """
    FVA from the Black-Scholes funding account integrated over the deal's life

    :param params: market parameters
    :param deal: option position
    :param f_hat: symmetric funding rate
    :param limit: subinterval cap of the outer quadrature
    :return: position * (f^ - r) K exp(-rT) int_0^T E_0[Phi(d2(s))] ds
    """
    spread = f_hat - params.rate
    if spread == 0:
        return 0.0
    integral, error = integrate.quad(
        lambda s: expected_exercise_probability(params, deal, s), 0.0, deal.maturity, epsabs=1e-8, limit=limit
    )
    if error > 1e-6:
        raise QuadratureError("time integral did not converge (error {})".format(error))
    return deal.position * spread * deal.strike * math.exp(-params.rate * deal.maturity) * integral


def fva_methods(params: MarketParams, deal: DealSpec, f_hat: float) -> dict:
    """FVA of the three shortcut methods as V^(k) - V."""
    v = deal_value(deal, params, params.spot, 0.0)
    return {
        "i": fva_method_i(params, deal, f_hat) - v,
        "ii": fva_method_ii(params, deal, f_hat) - v,
        "iii": fva_method_iii(params, deal, f_hat),
    }


def _check_matching(full: ValuationResult, simplified: ValuationResult):
    a, b = full.config, simplified.config
    mismatched = [
        name
        for name, left, right in (
            ("seed", full.seed, simplified.seed),
            ("n_paths", full.n_paths, simplified.n_paths),
            ("deal", a.deal, b.deal),
            ("market", a.params, b.params),
            ("grid", a.grid_step, b.grid_step),
            ("default times", a.distribution.times, b.distribution.times),
            ("collateral", a.collateral, b.collateral),
        )
        if left != right
    ]
    if not np.array_equal(a.distribution.probs, b.distribution.probs):
        mismatched.append("default law")
    if mismatched:
        raise ConfigurationError("NVA runs differ in {}".format(", ".join(mismatched)))


def _paired_error(full: ValuationResult, other: ValuationResult) -> float:
    # common paths per scenario: the error of the difference uses pathwise differences
    variance = 0.0
    for a, b in zip(full.runs, other.runs):
        diff = a.pathwise - b.pathwise
        variance += (a.scenario.weight**2) * np.var(diff, ddof=1) / len(diff)
    return math.sqrt(variance)


def simplified_config(config: PricingConfig, f_hat: float = None, neglect_first_to_default: bool = None):
    """
    Symmetrized-rate, risk-free close-out counterpart of a configuration

    :param config: full configuration
    :param f_hat: symmetric rate, midpoint of f+ and f- when None
    :param neglect_first_to_default: override of the engine flag
    :return: PricingConfig for Vhat
    """
    engine = config.engine
    if neglect_first_to_default is not None:
        engine = attrs.evolve(engine, neglect_first_to_default=neglect_first_to_default)
    return config.evolve(
        funding=config.funding.symmetrized(f_hat),
        closeout=CloseOutSpec(RISK_FREE_CLOSEOUT),
        engine=engine,
    )


def nva_from_results(full: ValuationResult, simplified: ValuationResult) -> NvaResult:
    _check_matching(full, simplified)
    nva = full.price - simplified.price
    if full.adjustments is not None:
        full.adjustments.nva = nva
    return NvaResult(
        full=full,
        simplified=simplified,
        nva=nva,
        std_error=_paired_error(full, simplified),
        rate=simplified.config.funding.rate_borrow,
    )


def compute_nva(
    config: PricingConfig, n_paths: int, seed: int, f_hat: float = None, neglect_first_to_default: bool = False
) -> NvaResult:
    """
    Non-linearity Valuation Adjustment

    :param config: full configuration with f+, f- and its close-out convention
    :param n_paths: paths per scenario, shared by both runs
    :param seed: seed shared by both runs
    :param f_hat: symmetric rate of the simplified run, midpoint when None
    :param neglect_first_to_default: simplified run ignores which party defaulted first
    :return: NvaResult with NVA = Vbar - Vhat
    """
    full_config = attrs.evolve(config, engine=attrs.evolve(config.engine, neglect_first_to_default=False))
    simple = simplified_config(config, f_hat, neglect_first_to_default)
    with ThreadPoolExecutor(max_workers=2) as pool:
        full_future = pool.submit(price_deal, full_config, n_paths, seed)
        simple_future = pool.submit(price_deal, simple, n_paths, seed)
        full, simplified = full_future.result(), simple_future.result()
    decompose(full)
    result = nva_from_results(full, simplified)
    debug("NVA = {:.4f} ({:.1f}%) at f^={:.4f}".format(result.nva, result.percentage, result.rate), 1)
    return result


def full_fva(config: PricingConfig, n_paths: int, seed: int) -> tuple:
    """
    FVA of the full method: the full price minus the full price funded at r

    :param config: configuration with its funding rates
    :param n_paths: paths per scenario
    :param seed: seed shared by both runs
    :return: (fva, std error of the paired difference, full result)
    """
    funding = config.funding
    at_risk_free = config.evolve(funding=FundingSpec.symmetric(config.params.rate, funding.policy, funding.account))
    with ThreadPoolExecutor(max_workers=2) as pool:
        funded = pool.submit(price_deal, config, n_paths, seed)
        reference = pool.submit(price_deal, at_risk_free, n_paths, seed)
        funded, reference = funded.result(), reference.result()
    return funded.price - reference.price, _paired_error(funded, reference), funded
