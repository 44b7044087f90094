"""
Market model:

Simulates the underlying stock under the risk-neutral measure and supplies the
Black-Scholes closed forms used for collateral, close-out, hedge
initialization and baselines.

The stock follows a geometric Brownian motion

    dS = r S dt + sigma S dW

and is stepped with the exact lognormal transition

    S(t + dt) = S(t) exp((r - sigma^2 / 2) dt + sigma sqrt(dt) Z)

so a coarse grid adds no discretization bias. Every path draws its normals
from its own PCG64 substream spawned from numpy's SeedSequence(seed), so a
path's values depend only on (seed, path index) and the grid.
"""

import math

import attrs
import numpy as np
from scipy.stats import norm

from src.errors import ConfigurationError, DomainError

LONG = 1
SHORT = -1
GRID_TOLERANCE = 1e-12


def _positive(instance, attribute, value):
    if not value > 0:
        raise ConfigurationError("{} must be positive, got {}".format(attribute.name, value))


def _non_negative(instance, attribute, value):
    if not value >= 0:
        raise ConfigurationError("{} must be non-negative, got {}".format(attribute.name, value))


def _finite(instance, attribute, value):
    if not math.isfinite(value):
        raise ConfigurationError("{} must be finite, got {}".format(attribute.name, value))


@attrs.frozen
class MarketParams:
    """
    Underlying dynamics.

    :param spot: S0 in currency units
    :param rate: continuously-compounded risk-free rate per year
    :param vol: lognormal volatility per sqrt(year); zero is accepted for degenerate checks
    """

    spot: float = attrs.field(converter=float, validator=_positive)
    rate: float = attrs.field(converter=float, validator=_finite)
    vol: float = attrs.field(converter=float, validator=[_finite, _non_negative])

    def with_rate(self, rate: float) -> "MarketParams":
        return attrs.evolve(self, rate=rate)


@attrs.frozen
class DealSpec:
    """
    European call on the stock held long (+1) or short (-1) by the investor.

    :param strike: K
    :param maturity: T in years
    :param position: LONG or SHORT
    """

    strike: float = attrs.field(converter=float, validator=_positive)
    maturity: float = attrs.field(converter=float, validator=_positive)
    position: int = attrs.field(default=LONG)

    @position.validator
    def _check_position(self, attribute, value):
        if value not in (LONG, SHORT):
            raise ConfigurationError("position must be +1 (long) or -1 (short), got {}".format(value))

    def payoff(self, spot):
        """
        Signed terminal cash flow to the investor

        :param spot: stock price(s) at maturity
        :return: position * max(S - K, 0)
        """
        return self.position * np.maximum(np.asarray(spot, dtype=float) - self.strike, 0.0)

    def flipped(self) -> "DealSpec":
        return attrs.evolve(self, position=-self.position)


@attrs.frozen
class TimeGrid:
    """
    Simulation, funding and margining dates in year fractions.

    :param dates: strictly increasing times, first element 0
    """

    dates: tuple = attrs.field(converter=lambda d: tuple(float(x) for x in d))

    @dates.validator
    def _check_dates(self, attribute, value):
        if len(value) < 2:
            raise ConfigurationError("a time grid needs at least two dates")
        if value[0] != 0.0:
            raise ConfigurationError("a time grid must start at 0, got {}".format(value[0]))
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ConfigurationError("time grid dates must be strictly increasing")

    @classmethod
    def uniform(cls, maturity: float, step: float) -> "TimeGrid":
        """
        Build an evenly spaced grid from 0 to maturity

        The last interval absorbs any remainder so the grid always ends at maturity.

        :param maturity: last date
        :param step: target spacing
        :return: TimeGrid
        """
        if step <= 0 or maturity <= 0:
            raise ConfigurationError("grid step and maturity must be positive")
        n = max(1, int(round(maturity / step)))
        return cls(np.linspace(0.0, maturity, n + 1))

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.dates)

    @property
    def step(self) -> float:
        """Mean spacing between adjacent dates."""
        return (self.dates[-1] - self.dates[0]) / (len(self.dates) - 1)

    @property
    def alphas(self) -> np.ndarray:
        """Year fractions between adjacent dates."""
        return np.diff(self.times)

    @property
    def horizon(self) -> float:
        return self.dates[-1]

    def __len__(self):
        return len(self.dates)

    def index_at_or_after(self, t: float) -> int:
        """
        Return the index of the first grid date at or after t

        :param t: time in years
        :return: grid index
        """
        for i, date in enumerate(self.dates):
            if date >= t - GRID_TOLERANCE:
                return i
        raise ConfigurationError("time {} lies beyond the grid horizon {}".format(t, self.horizon))

    def truncate(self, tau) -> "TimeGrid":
        """
        Cut the grid at the first date at or after the first-to-default time

        :param tau: first-to-default time, or None for no default
        :return: the grid itself when tau is None or not before the horizon
        """
        if tau is None or tau >= self.horizon - GRID_TOLERANCE:
            return self
        return TimeGrid(self.dates[: self.index_at_or_after(tau) + 1])


@attrs.frozen
class PathSet:
    """
    Simulated stock prices.

    :param values: N x len(grid) array, column 0 equal to S0
    :param seed: seed the paths were drawn with
    """

    values: np.ndarray = attrs.field(eq=False)
    seed: int
    grid: TimeGrid

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]


def simulate_gbm_paths(
    params: MarketParams, grid: TimeGrid, n_paths: int, seed: int, antithetic: bool = False
) -> PathSet:
    """
    Simulate geometric Brownian motion paths with exact lognormal steps

    :param params: market parameters
    :param grid: simulation dates
    :param n_paths: number of paths, at least 2
    :param seed: RNG seed
    :param antithetic: pair every odd path with the negated normals of the path before it
    :return: PathSet of shape n_paths x len(grid)
    """
    if not isinstance(grid, TimeGrid):
        raise ConfigurationError("grid must be a TimeGrid")
    if n_paths is None or int(n_paths) < 2:
        raise ConfigurationError("n_paths must be at least 2, got {}".format(n_paths))
    n_paths = int(n_paths)
    n_steps = len(grid) - 1

    streams = np.random.SeedSequence(seed).spawn(n_paths)
    normals = np.empty((n_paths, n_steps))
    for i, stream in enumerate(streams):
        if antithetic and i % 2 == 1:
            normals[i] = -normals[i - 1]
        else:
            normals[i] = np.random.Generator(np.random.PCG64(stream)).standard_normal(n_steps)

    dt = grid.alphas
    drift = (params.rate - 0.5 * params.vol**2) * dt
    shocks = params.vol * np.sqrt(dt) * normals
    log_growth = np.cumsum(drift + shocks, axis=1)

    values = np.empty((n_paths, n_steps + 1))
    values[:, 0] = params.spot
    values[:, 1:] = params.spot * np.exp(log_growth)
    return PathSet(values=values, seed=seed, grid=grid)


def _check_times(t: float, T: float):
    if t > T + GRID_TOLERANCE:
        raise DomainError("valuation time t={} is after maturity T={}".format(t, T))


def _d1_d2(spot, strike, rate, vol, tau):
    spot = np.asarray(spot, dtype=float)
    vol_sqrt_tau = vol * math.sqrt(tau)
    with np.errstate(divide="ignore"):
        d1 = (np.log(spot / strike) + (rate + 0.5 * vol**2) * tau) / vol_sqrt_tau
    return d1, d1 - vol_sqrt_tau


def bs_price(spot, strike: float, rate: float, vol: float, t: float, T: float):
    """
    Black-Scholes price of a European call

    :param spot: stock price(s), positive
    :param strike: strike, positive
    :param rate: rate used for both drift and discounting
    :param vol: volatility; zero gives the deterministic limit
    :param t: valuation time
    :param T: maturity
    :return: S Phi(d1) - K exp(-r(T-t)) Phi(d2), intrinsic value at t = T
    """
    _check_times(t, T)
    tau = max(T - t, 0.0)
    spot = np.asarray(spot, dtype=float)
    if tau <= GRID_TOLERANCE:
        price = np.maximum(spot - strike, 0.0)
    elif vol <= 0.0:
        price = np.maximum(spot - strike * math.exp(-rate * tau), 0.0)
    else:
        d1, d2 = _d1_d2(spot, strike, rate, vol, tau)
        price = spot * norm.cdf(d1) - strike * math.exp(-rate * tau) * norm.cdf(d2)
    return float(price) if price.ndim == 0 else price


def bs_delta(spot, strike: float, rate: float, vol: float, t: float, T: float):
    """
    Black-Scholes delta of a European call

    :param spot: stock price(s)
    :param strike: strike
    :param rate: risk-free rate
    :param vol: volatility
    :param t: valuation time
    :param T: maturity
    :return: Phi(d1); the exercise indicator at expiry or for zero volatility
    """
    _check_times(t, T)
    tau = max(T - t, 0.0)
    spot = np.asarray(spot, dtype=float)
    if tau <= GRID_TOLERANCE:
        delta = (spot > strike).astype(float)
    elif vol <= 0.0:
        delta = (spot > strike * math.exp(-rate * tau)).astype(float)
    else:
        d1, _ = _d1_d2(spot, strike, rate, vol, tau)
        delta = norm.cdf(d1)
    return float(delta) if delta.ndim == 0 else delta


def discount_factor(rate: float, t: float, s: float) -> float:
    """
    Discount factor for a constant rate

    :param rate: continuously compounded rate
    :param t: start time
    :param s: end time, not before t
    :return: exp(-rate (s - t))
    """
    if t > s + GRID_TOLERANCE:
        raise DomainError("discount factor start t={} is after end s={}".format(t, s))
    return math.exp(-rate * max(s - t, 0.0))


def deal_value(deal: DealSpec, params: MarketParams, spot, t: float):
    """
    Signed default-free, funding-free price of the deal to the investor

    :param deal: the option position
    :param params: market parameters
    :param spot: stock price(s) at t
    :param t: valuation time
    :return: position * bs_price
    """
    return deal.position * bs_price(spot, deal.strike, params.rate, params.vol, t, deal.maturity)


def deal_delta(deal: DealSpec, params: MarketParams, spot, t: float):
    return deal.position * bs_delta(spot, deal.strike, params.rate, params.vol, t, deal.maturity)
