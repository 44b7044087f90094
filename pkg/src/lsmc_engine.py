"""
Least-squares Monte Carlo engine:

For every default scenario the deal is priced by backward induction on the
scenario's grid, which stops at the first grid date at or after the
first-to-default time. On each date t_j and each path

    Xi   = D(t_j, t_j+1) V_j+1 + pibar_j          (regressed on S_j)
    F    = (E[Xi] - C' - H) / (1 - kappa(f~))
    Vbar = F + C' + H

where C' is the collateral under rehypothecation (zero otherwise), kappa is
the one-period funding carry of the effective rate f~ selected by the sign of
F, and pibar_j gathers the payoff, the margining cash flow and the on-default
cash flow falling in (t_j, t_j+1].

When the treasury funds only the hedge (HEDGE_ACCOUNT) the system reads

    F    = -(H + C')
    Vbar = E[Xi] + kappa(f~) F

and the premium Vbar - F - C' - H = Vbar sits in an account carried at r.

With the risk-free hedge H is the Black-Scholes delta position of V and the
system is solved in closed form. With the full hedge H is the forward
difference delta of Vbar itself, making the per-path system nonlinear; it is
solved by batched Newton-Raphson with a two-branch direct evaluation as
fallback.

The scenario price is the mean of the discounted path contributions with the
collateral account at the stop date as control variate.
"""

import logging
import time

import attrs
import numpy as np

from src import diagnostics
from src.credit_model import (
    COUNTERPARTY,
    INVESTOR,
    DefaultScenario,
    JointDefaultDistribution,
    enumerate_scenarios,
    no_default,
    resolve_simultaneous,
    tie_break_generator,
)
from src.deal_cashflows import (
    DEAL_ACCOUNT,
    FIRST_ORDER,
    LEG_VARIANTS,
    MARKET,
    REPLACEMENT_CLOSEOUT,
    CloseOutSpec,
    CollateralSpec,
    FundingSpec,
    RecoverySpec,
    carry_factor,
    close_out_payment,
    collateral_policy_value,
    cva_dva_integrands,
    effective_collateral_rate,
    market_borrow_rate,
)
from src.diagnostics import RunDiagnostics, StepStats, debug
from src.errors import ConfigurationError, ConvergenceError
from src.market_model import (
    GRID_TOLERANCE,
    DealSpec,
    MarketParams,
    PathSet,
    TimeGrid,
    bs_price,
    deal_delta,
    deal_value,
    simulate_gbm_paths,
)
from src.newton import DEFAULT_MAX_ITER, DEFAULT_TOL, newton_batch
from src.regression import RegressionBasis, fit_regression

log = logging.getLogger(__name__)

FULL = "full"
RISK_FREE = "risk_free"
HEDGE_MODES = (FULL, RISK_FREE)
DEFAULT_STEP = 1.0 / 12.0
MAX_FAILURE_FRACTION = 0.001


def _choice(*choices):
    def check(instance, attribute, value):
        if value not in choices:
            raise ConfigurationError("{} must be one of {}, got {!r}".format(attribute.name, choices, value))

    return check


@attrs.frozen
class EngineSpec:
    """
    Numerical settings of the backward induction.

    :param hedge: FULL hedges Vbar, RISK_FREE hedges the Black-Scholes price
    :param legs: cash-flow form of the margining and funding legs
    :param basis: regression basis in the spot
    :param tol: Newton tolerance on the scaled residual max-norm
    :param max_iter: Newton iteration cap
    :param max_failure_fraction: share of paths per step allowed to have no finite solution
    :param antithetic: antithetic normals in the path simulation
    :param neglect_first_to_default: on-default flow ignores which party defaulted first
    """

    hedge: str = attrs.field(default=FULL, validator=_choice(*HEDGE_MODES))
    legs: str = attrs.field(default=FIRST_ORDER, validator=_choice(*LEG_VARIANTS))
    basis: RegressionBasis = RegressionBasis()
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    max_failure_fraction: float = MAX_FAILURE_FRACTION
    antithetic: bool = False
    neglect_first_to_default: bool = False


@attrs.frozen
class PricingConfig:
    """
    Everything price_deal needs besides the path count and the seed.
    """

    params: MarketParams
    deal: DealSpec
    funding: FundingSpec
    collateral: CollateralSpec = CollateralSpec()
    recoveries: RecoverySpec = RecoverySpec()
    closeout: CloseOutSpec = CloseOutSpec()
    distribution: JointDefaultDistribution = attrs.field(factory=no_default)
    engine: EngineSpec = EngineSpec()
    grid_step: float = DEFAULT_STEP

    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.deal.maturity, self.grid_step)

    @property
    def rehypothecation(self) -> bool:
        return self.collateral.enabled and self.collateral.rehypothecation

    def evolve(self, **changes) -> "PricingConfig":
        return attrs.evolve(self, **changes)


@attrs.define
class BackwardState:
    """
    Solved accounts of one scenario on its (truncated) grid.

    value has one column per grid date, the accounts one column per period
    start; Vbar = F + H (+ C under rehypothecation) + premium holds column by
    column, the premium account being zero when the whole deal is funded.
    """

    scenario: DefaultScenario
    grid: TimeGrid
    spot: np.ndarray
    value: np.ndarray
    funding: np.ndarray
    hedge: np.ndarray
    collateral: np.ndarray
    funding_rate: np.ndarray
    collateral_carry: np.ndarray
    funding_carry: np.ndarray
    period_flow: np.ndarray
    rehypothecation: bool
    tau: float = None
    closeout_amount: np.ndarray = None
    cva_loss: np.ndarray = None
    dva_gain: np.ndarray = None
    default_flow: np.ndarray = None
    payoff: np.ndarray = None
    account: str = DEAL_ACCOUNT

    @property
    def n_paths(self) -> int:
        return self.spot.shape[0]

    @property
    def stop_index(self) -> int:
        return len(self.grid) - 1

    def value_at(self, j: int) -> np.ndarray:
        """Vbar on date j; zero on and after the close-out date."""
        if j >= self.stop_index:
            return np.zeros(self.n_paths)
        return self.value[:, j]

    def accounted_collateral(self) -> np.ndarray:
        return self.collateral if self.rehypothecation else np.zeros_like(self.collateral)

    def premium_account(self) -> np.ndarray:
        """Vbar - F - C' - H per period start, carried at the risk-free rate."""
        return self.value[:, :-1] - self.funding - self.accounted_collateral() - self.hedge


@attrs.define
class ScenarioRun:
    """
    :param pathwise: discounted path contributions, net of the collateral control
    :param control: discounted collateral account at the stop date minus its time-0 value
    :param control_beta: regression coefficient of the raw contributions on the control
    """

    scenario: DefaultScenario
    state: BackwardState
    price: float
    std_error: float
    pathwise: np.ndarray
    control: np.ndarray = None
    control_beta: float = 0.0


@attrs.define
class ValuationResult:
    """
    Price of the deal aggregated over default scenarios.

    :param price: sum of weight * scenario price
    :param std_error: sqrt(sum of weight^2 * scenario SE^2)
    """

    price: float
    std_error: float
    scenario_prices: dict
    scenario_errors: dict
    scenario_weights: dict
    runs: list = attrs.field(eq=False, repr=False)
    diagnostics: RunDiagnostics = attrs.field(eq=False, repr=False)
    config: PricingConfig = attrs.field(eq=False, repr=False)
    n_paths: int = 0
    seed: int = 0
    adjustments: object = None


@attrs.define
class HedgeSystem:
    """
    Per-path funding/hedge system of one backward step.

    :param expected: regression estimate of E[Xi] per path
    :param collateral: C' per path, zero without rehypothecation
    :param spot: S_j
    :param spot_next: S_j+1
    :param value_next: Vbar_j+1 plus the period cash flows carried to t_j+1
    :param alpha: period year fraction
    :param rate_pos: borrowing rate of the period
    :param rate_neg: lending rate of the period
    :param kappa_pos: one-period carry when borrowing
    :param kappa_neg: one-period carry when lending
    :param account: DEAL_ACCOUNT or HEDGE_ACCOUNT, what F funds
    """

    expected: np.ndarray
    collateral: np.ndarray
    spot: np.ndarray
    spot_next: np.ndarray
    value_next: np.ndarray
    alpha: float
    rate_pos: float
    rate_neg: float
    kappa_pos: float
    kappa_neg: float
    account: str = DEAL_ACCOUNT

    @property
    def funds_deal(self) -> bool:
        return self.account == DEAL_ACCOUNT

    def branch(self, funding):
        borrowing = np.asarray(funding) > 0
        rate = np.where(borrowing, self.rate_pos, self.rate_neg)
        kappa = np.where(borrowing, self.kappa_pos, self.kappa_neg)
        return rate, kappa

    def hedge_ratio(self, value, rate, paths=slice(None)):
        growth = 1.0 + self.alpha * rate
        spot = self.spot[paths]
        return (self.value_next[paths] - growth * value) / (self.spot_next[paths] - growth * spot) * spot

    def settle(self, funding, hedge):
        """Vbar implied by solved funding and hedge accounts."""
        if self.funds_deal:
            return funding + self.collateral + hedge
        _, kappa = self.branch(funding)
        return self.expected + kappa * funding

    def residual(self, z: np.ndarray, paths) -> np.ndarray:
        """
        Residuals of funding consistency, hedge relation and value equation

        :param z: columns F, H, Vbar for the given paths
        :param paths: path indices z belongs to
        :return: len(paths) x 3 residuals
        """
        funding, hedge, value = z[:, 0], z[:, 1], z[:, 2]
        rate, kappa = self.branch(funding)
        expected, collateral = self.expected[paths], self.collateral[paths]
        out = np.empty_like(z)
        out[:, 1] = hedge - self.hedge_ratio(value, rate, paths)
        if self.funds_deal:
            out[:, 0] = funding - (expected - collateral - hedge) / (1.0 - kappa)
            out[:, 2] = value - funding - collateral - hedge
        else:
            out[:, 0] = funding + collateral + hedge
            out[:, 2] = value - expected - kappa * funding
        return out

    def with_fixed_hedge(self, hedge):
        """Closed-form accounts for a hedge that does not depend on Vbar."""
        if not self.funds_deal:
            funding = -(self.collateral + hedge)
            return funding, hedge, self.settle(funding, hedge)
        surplus = self.expected - self.collateral - hedge
        _, kappa = self.branch(surplus)
        funding = surplus / (1.0 - kappa)
        return funding, hedge, funding + self.collateral + hedge

    def branch_solution(self, borrowing: bool):
        """
        Solve the system on one branch of the effective funding rate

        :param borrowing: True for f+, False for f-
        :return: (F, H, Vbar, surplus) per path; surplus has the sign of F
        """
        rate = self.rate_pos if borrowing else self.rate_neg
        kappa = self.kappa_pos if borrowing else self.kappa_neg
        growth = 1.0 + self.alpha * rate
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            leverage = self.spot / (self.spot_next - growth * self.spot)
            if not self.funds_deal:
                value = (self.expected - kappa * (self.collateral + leverage * self.value_next)) / (
                    1.0 - kappa * leverage * growth
                )
                hedge = leverage * (self.value_next - growth * value)
                funding = -(self.collateral + hedge)
                return funding, hedge, value, funding
            multiplier = 1.0 / (1.0 - kappa)
            surplus = (self.expected - self.collateral - leverage * (self.value_next - growth * self.expected)) / (
                1.0 - leverage * growth * (multiplier - 1.0)
            )
        hedge = self.expected - self.collateral - surplus
        funding = multiplier * surplus
        return funding, hedge, funding + self.collateral + hedge, surplus

    def two_branch(self):
        """
        Direct evaluation of both rate branches

        A branch is self-consistent when the sign of its funding account
        selects its own rate. Among consistent branches the one with the
        smaller funding need wins; with none the branch closest to the kink
        is taken and the path is flagged.

        :return: (F, H, Vbar, no_root mask, finite mask)
        """
        pos = self.branch_solution(True)
        neg = self.branch_solution(False)
        pos_ok = pos[3] > 0
        neg_ok = neg[3] <= 0
        closer_pos = np.abs(pos[3]) < np.abs(neg[3])
        take_pos = np.where(pos_ok & neg_ok, closer_pos, np.where(pos_ok | neg_ok, pos_ok, closer_pos))
        funding, hedge, value = (np.where(take_pos, p, n) for p, n in zip(pos[:3], neg[:3]))
        no_root = ~(pos_ok | neg_ok)
        finite = np.isfinite(funding) & np.isfinite(hedge) & np.isfinite(value)
        return funding, hedge, value, no_root, finite


@attrs.frozen
class HedgeSolution:
    funding: np.ndarray = attrs.field(eq=False)
    hedge: np.ndarray = attrs.field(eq=False)
    value: np.ndarray = attrs.field(eq=False)
    iterations: np.ndarray = attrs.field(eq=False)
    fallback: np.ndarray = attrs.field(eq=False)
    no_root: np.ndarray = attrs.field(eq=False)
    failed: np.ndarray = attrs.field(eq=False)


def newton_solve(system: HedgeSystem, initial_hedge, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """
    Solve the funding/hedge system of every path

    :param system: per-path system of the step
    :param initial_hedge: starting hedge, the Black-Scholes delta position
    :param tol: residual tolerance
    :param max_iter: Newton iteration cap
    :return: HedgeSolution; paths Newton leaves unresolved take the two-branch solution
    """
    start = np.column_stack(system.with_fixed_hedge(np.asarray(initial_hedge, dtype=float)))
    result = newton_batch(system.residual, start, tol=tol, max_iter=max_iter)
    funding, hedge, value = result.x[:, 0].copy(), result.x[:, 1].copy(), result.x[:, 2].copy()

    fallback = ~result.converged
    no_root = np.zeros_like(fallback)
    failed = np.zeros_like(fallback)
    if fallback.any():
        f2, h2, v2, nr, finite = system.two_branch()
        funding[fallback], hedge[fallback], value[fallback] = f2[fallback], h2[fallback], v2[fallback]
        no_root = fallback & nr
        failed = fallback & ~finite
        if failed.any():
            f3, h3, v3 = system.with_fixed_hedge(np.asarray(initial_hedge, dtype=float))
            funding[failed], hedge[failed], value[failed] = f3[failed], h3[failed], v3[failed]
    value = system.settle(funding, hedge)
    return HedgeSolution(
        funding=funding,
        hedge=hedge,
        value=value,
        iterations=result.iterations,
        fallback=fallback,
        no_root=no_root,
        failed=failed,
    )


def hedge_mode(config: PricingConfig) -> str:
    """
    Hedging mode of a configuration

    :param config: pricing configuration
    :return: FULL when Vbar is hedged (Newton engaged), RISK_FREE when only V is
    """
    return config.engine.hedge


def scenario_seed(seed: int, index: int) -> int:
    """Seed of the path set of the index-th scenario."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@attrs.define
class _ScenarioContext:
    config: PricingConfig
    scenario: DefaultScenario
    grid: TimeGrid
    spot: np.ndarray
    collateral: np.ndarray
    collateral_carry: np.ndarray
    terminal_flow: np.ndarray
    discounts: np.ndarray
    borrow_rates: np.ndarray
    label: str
    tau: float = None


def _borrow_rates(config: PricingConfig, grid: TimeGrid) -> np.ndarray:
    funding = config.funding
    rates = np.full(len(grid) - 1, funding.rate_borrow)
    if funding.policy != MARKET:
        return rates
    dist = config.distribution
    for j, (start, end) in enumerate(zip(grid.dates[:-1], grid.dates[1:])):
        alive = dist.survival_probability(INVESTOR, start)
        survival = dist.survival_probability(INVESTOR, end) / alive if alive > 0 else 1.0
        rates[j] = market_borrow_rate(funding.rate_borrow, end - start, survival, funding.recovery_i)
    return rates


def _close_out(config, scenario, spot_tau, tau, pre_default_collateral, default_free):
    if config.closeout.convention == REPLACEMENT_CLOSEOUT:
        eps = default_free
    else:
        eps = deal_value(config.deal, config.params, spot_tau, tau)
    cva, dva = cva_dva_integrands(eps, pre_default_collateral, config.recoveries)
    if config.engine.neglect_first_to_default:
        horizon = config.deal.maturity
        flow = (
            eps
            - cva * scenario.defaults_before(COUNTERPARTY, horizon + GRID_TOLERANCE)
            + dva * scenario.defaults_before(INVESTOR, horizon + GRID_TOLERANCE)
        )
    else:
        flow = close_out_payment(scenario, eps, eps, pre_default_collateral, config.recoveries)
    return eps, cva, dva, flow


def _context(config: PricingConfig, scenario: DefaultScenario, paths: PathSet, default_free=None):
    deal, params = config.deal, config.params
    tau = scenario.tau
    if tau is not None and tau >= deal.maturity - GRID_TOLERANCE:
        tau = None
    grid = paths.grid.truncate(tau)
    m = len(grid) - 1
    spot = paths.values[:, : m + 1]
    times, alphas = grid.times, grid.alphas

    collateral = np.column_stack(
        [collateral_policy_value(deal, params, config.collateral, times[j], spot[:, j]) for j in range(m)]
    )
    c_rate = effective_collateral_rate(config.collateral.rate_pos, config.collateral.rate_neg, collateral)
    collateral_carry = np.column_stack(
        [carry_factor(params.rate, c_rate[:, j], alphas[j], config.engine.legs) for j in range(m)]
    )
    discounts = np.exp(-params.rate * alphas)
    return _ScenarioContext(
        config=config,
        scenario=scenario,
        grid=grid,
        spot=spot,
        collateral=collateral,
        collateral_carry=collateral_carry,
        terminal_flow=np.zeros(paths.n_paths),
        discounts=discounts,
        borrow_rates=_borrow_rates(config, grid),
        label=scenario.label,
        tau=tau,
    )


def _step_system(ctx: _ScenarioContext, j: int, expected, value_next) -> HedgeSystem:
    config = ctx.config
    alpha = ctx.grid.alphas[j]
    rate_pos, rate_neg = ctx.borrow_rates[j], config.funding.rate_lend
    legs, r = config.engine.legs, config.params.rate
    collateral = ctx.collateral[:, j] if config.rehypothecation else np.zeros(len(expected))
    return HedgeSystem(
        expected=expected,
        collateral=collateral,
        spot=ctx.spot[:, j],
        spot_next=ctx.spot[:, j + 1],
        value_next=value_next,
        alpha=alpha,
        rate_pos=rate_pos,
        rate_neg=rate_neg,
        kappa_pos=float(carry_factor(r, rate_pos, alpha, legs)),
        kappa_neg=float(carry_factor(r, rate_neg, alpha, legs)),
        account=config.funding.account,
    )


def _conditional_expectation(spot, target, basis: RegressionBasis, j: int):
    if j == 0 or np.ptp(spot) <= GRID_TOLERANCE * max(1.0, abs(spot[0])):
        return np.full_like(target, target.mean()), float("nan")
    fit = fit_regression(spot, target, basis)
    return fit.predict(spot), fit.r_squared


def backward_step(j: int, value_next: np.ndarray, ctx: _ScenarioContext, diag: RunDiagnostics):
    """
    One step of the backward recursion

    :param j: date index on the scenario grid
    :param value_next: Vbar on date j+1
    :param ctx: scenario data
    :param diag: diagnostics sink
    :return: (HedgeSolution, margining+payoff+default flow of the period valued at t_j)
    """
    config = ctx.config
    n = ctx.spot.shape[0]
    stop = len(ctx.grid) - 1
    if j >= stop:
        zeros = np.zeros(n)
        empty = np.zeros(n, dtype=bool)
        return HedgeSolution(zeros, zeros, zeros, np.zeros(n, dtype=int), empty, empty, empty), zeros

    flow = ctx.collateral[:, j] * ctx.collateral_carry[:, j]
    if j == stop - 1:
        flow = flow + ctx.terminal_flow
    target = ctx.discounts[j] * value_next + flow
    expected, r_squared = _conditional_expectation(ctx.spot[:, j], target, config.engine.basis, j)
    system = _step_system(ctx, j, expected, value_next + flow / ctx.discounts[j])
    t_j = ctx.grid.dates[j]
    initial = deal_delta(config.deal, config.params, ctx.spot[:, j], t_j) * ctx.spot[:, j]

    if hedge_mode(config) == RISK_FREE:
        funding, hedge, value = system.with_fixed_hedge(initial)
        empty = np.zeros(n, dtype=bool)
        solution = HedgeSolution(funding, hedge, value, np.zeros(n, dtype=int), empty, empty, empty)
    else:
        solution = newton_solve(system, initial, tol=config.engine.tol, max_iter=config.engine.max_iter)
        if solution.failed.sum() > config.engine.max_failure_fraction * n:
            raise ConvergenceError(
                "{}: {} paths without a finite solution at step {}".format(ctx.label, int(solution.failed.sum()), j),
                paths=np.flatnonzero(solution.failed),
            )
        if solution.no_root.any():
            log.warning(
                "%s step %d: %d paths have no self-consistent funding sign", ctx.label, j, solution.no_root.sum()
            )

    iterations = solution.iterations[solution.iterations > 0]
    diag.record_step(
        ctx.label,
        StepStats(
            step=j,
            r_squared=r_squared,
            iterations_median=float(np.median(iterations)) if iterations.size else 0.0,
            iterations_max=int(solution.iterations.max()) if n else 0,
            fallback_paths=int(solution.fallback.sum()),
            no_root_paths=int(solution.no_root.sum()),
        ),
    )
    return solution, flow


def collateral_control(config: PricingConfig, grid: TimeGrid, spot: np.ndarray) -> np.ndarray:
    """
    Discounted collateral account at the stop date net of its time-0 value

    With C_t = V_t this is a martingale increment of known zero mean; without
    collateral it vanishes.

    :param config: pricing configuration
    :param grid: scenario grid, possibly truncated at the close-out date
    :param spot: stock paths on that grid
    :return: control value per path
    """
    deal, params = config.deal, config.params
    stop = grid.dates[-1]
    final = collateral_policy_value(deal, params, config.collateral, stop, spot[:, -1])
    start = collateral_policy_value(deal, params, config.collateral, 0.0, spot[:, 0])
    return np.exp(-params.rate * stop) * final - start


def control_beta(pathwise: np.ndarray, control: np.ndarray) -> float:
    """Least-squares coefficient of the path contributions on the control, zero for a flat control."""
    spread = control - control.mean()
    variance = float(spread @ spread)
    if variance <= GRID_TOLERANCE * len(spread):
        return 0.0
    return float(spread @ (pathwise - pathwise.mean()) / variance)


def run_scenario(config: PricingConfig, scenario: DefaultScenario, paths: PathSet, diag: RunDiagnostics):
    """
    Backward induction for one default scenario

    :param config: pricing configuration
    :param scenario: scenario with a resolved first defaulter
    :param paths: stock paths on the full grid
    :param diag: diagnostics sink
    :return: ScenarioRun
    """
    ctx = _context(config, scenario, paths)
    m = len(ctx.grid) - 1
    n = paths.n_paths
    tau = ctx.tau

    eps = cva = dva = default_flow = payoff = None
    if tau is None:
        payoff = config.deal.payoff(ctx.spot[:, m])
        ctx.terminal_flow = ctx.discounts[m - 1] * payoff
    else:
        default_free = None
        if config.closeout.convention == REPLACEMENT_CLOSEOUT:
            # pre-default full price of the deal to maturity on the same paths
            clean = run_scenario(config, DefaultScenario(), paths, RunDiagnostics(hedge_mode=hedge_mode(config)))
            default_free = clean.state.value[:, m]
        t_close = ctx.grid.dates[m]
        eps, cva, dva, default_flow = _close_out(
            config, scenario, ctx.spot[:, m], t_close, ctx.collateral[:, m - 1], default_free
        )
        ctx.terminal_flow = np.exp(-config.params.rate * (tau - ctx.grid.dates[m - 1])) * default_flow

    value = np.zeros((n, m + 1))
    funding = np.zeros((n, m))
    hedge = np.zeros((n, m))
    funding_rate = np.zeros((n, m))
    funding_carry = np.zeros((n, m))
    period_flow = np.zeros((n, m))
    for j in reversed(range(m)):
        solution, period_flow[:, j] = backward_step(j, value[:, j + 1], ctx, diag)
        value[:, j], funding[:, j], hedge[:, j] = solution.value, solution.funding, solution.hedge
        funding_rate[:, j], funding_carry[:, j] = _step_system(ctx, j, value[:, j], value[:, j]).branch(
            solution.funding
        )

    # OLS with an intercept preserves the cross-path mean, so these average to the price
    start_discount = np.exp(-config.params.rate * ctx.grid.times[:-1])
    pathwise = (period_flow + funding_carry * funding) @ start_discount
    control = collateral_control(config, ctx.grid, ctx.spot)
    beta = control_beta(pathwise, control)
    pathwise = pathwise - beta * control
    state = BackwardState(
        scenario=scenario,
        grid=ctx.grid,
        spot=ctx.spot,
        value=value,
        funding=funding,
        hedge=hedge,
        collateral=ctx.collateral,
        funding_rate=funding_rate,
        collateral_carry=ctx.collateral_carry,
        funding_carry=funding_carry,
        period_flow=period_flow,
        rehypothecation=config.rehypothecation,
        tau=tau,
        closeout_amount=eps,
        cva_loss=cva,
        dva_gain=dva,
        default_flow=default_flow,
        payoff=payoff,
        account=config.funding.account,
    )
    price = float(value[:, 0].mean() - beta * control.mean())
    std_error = float(pathwise.std(ddof=1) / np.sqrt(n))
    debug(
        "{}: price={:.4f} se={:.4f} weight={:.4f} control beta={:.3f}".format(
            scenario.label, price, std_error, scenario.weight, beta
        ),
        1,
    )
    return ScenarioRun(
        scenario=scenario,
        state=state,
        price=price,
        std_error=std_error,
        pathwise=pathwise,
        control=control,
        control_beta=beta,
    )


def _check_rates(config: PricingConfig):
    funding = config.funding
    if funding.rate_borrow < funding.rate_lend:
        log.warning(
            "borrowing rate %.4f below lending rate %.4f: borrowing to lend is an arbitrage",
            funding.rate_borrow,
            funding.rate_lend,
        )


def price_deal(config: PricingConfig, n_paths: int, seed: int) -> ValuationResult:
    """
    Price the deal over all default scenarios

    :param config: pricing configuration
    :param n_paths: paths per scenario
    :param seed: run seed
    :return: ValuationResult with per-scenario prices and diagnostics
    """
    started = time.perf_counter()
    _check_rates(config)
    grid = config.grid()
    diag = RunDiagnostics(hedge_mode=hedge_mode(config))
    tie_rng = tie_break_generator(seed)

    runs = []
    for index, scenario in enumerate(enumerate_scenarios(config.distribution)):
        if scenario.is_simultaneous:
            scenario = resolve_simultaneous(scenario, tie_rng.random())
            diag.tie_breaks[scenario.label] = scenario.first_defaulter
        paths = simulate_gbm_paths(
            config.params, grid, n_paths, scenario_seed(seed, index), antithetic=config.engine.antithetic
        )
        run = run_scenario(config, scenario, paths, diag)
        run.scenario = scenario
        runs.append(run)
        diag.scenario_prices[scenario.label] = run.price
        diag.scenario_errors[scenario.label] = run.std_error

    weights = np.array([run.scenario.weight for run in runs])
    prices = np.array([run.price for run in runs])
    errors = np.array([run.std_error for run in runs])
    price = float(weights @ prices)
    std_error = float(np.sqrt(np.sum((weights * errors) ** 2)))
    diag.elapsed = time.perf_counter() - started
    debug("priced {} scenarios: {:.4f} ({:.4f}) in {:.2f}s".format(len(runs), price, std_error, diag.elapsed), 1)
    if diag.total_fallbacks():
        log.warning("Newton fell back to direct evaluation on %d path-steps", diag.total_fallbacks())

    return ValuationResult(
        price=price,
        std_error=std_error,
        scenario_prices={run.scenario.label: run.price for run in runs},
        scenario_errors={run.scenario.label: run.std_error for run in runs},
        scenario_weights={run.scenario.label: run.scenario.weight for run in runs},
        runs=runs,
        diagnostics=diag,
        config=config,
        n_paths=int(n_paths),
        seed=seed,
    )


def classical_price(config: PricingConfig) -> float:
    """Signed Black-Scholes price of the deal at time 0."""
    deal, params = config.deal, config.params
    return deal.position * bs_price(params.spot, deal.strike, params.rate, params.vol, 0.0, deal.maturity)


def lsmc_r_sensitivity(config: PricingConfig, r_values, n_paths: int, seed: int) -> dict:
    """
    Rerun price_deal at several risk-free rates with everything else fixed

    The discrete setup carries r through the collateral, the close-out and the
    stock drift, so the prices move with r.

    :param config: pricing configuration
    :param r_values: risk-free rates
    :param n_paths: paths per scenario
    :param seed: run seed
    :return: {r: ValuationResult}
    """
    return {
        r: price_deal(config.evolve(params=config.params.with_rate(r)), n_paths, seed) for r in r_values
    }
