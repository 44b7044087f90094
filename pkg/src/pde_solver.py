"""
Pre-default PDE oracle:

    V_t + 1/2 sigma^2 S^2 V_SS + f~ S V_S - (f~ + lambda) V + (f~ - c~) C + lambda theta + pi = 0

with V(T) = payoff and f~ = f+ where the funding account F = V - C - S V_S is
positive, f- elsewhere. Without rehypothecation F = V - S V_S and the
collateral term becomes (r - c~) C.

The risk-free rate only appears in the no-rehypothecation collateral term;
with rehypothecation (or C = 0) the scheme never reads it.

Time stepping is a theta-scheme on a uniform spot grid. On every time level
the sign policy of F is fixed, the linear tridiagonal system solved, and the
policy recomputed until it stops changing.
"""

import attrs
import numpy as np
from scipy.linalg import solve_banded

from src import diagnostics
from src.errors import ConfigurationError, SolverError

MIN_NODES = 16
MAX_SWEEPS = 25


def _zero(t, s):
    return np.zeros_like(np.asarray(s, dtype=float))


@attrs.frozen
class PdeGrid:
    """
    :param s_min: lower spot bound, >= 0
    :param s_max: upper spot bound
    :param n_s: spot nodes
    :param n_t: time steps
    :param theta: 1 fully implicit, 0.5 Crank-Nicolson
    """

    s_min: float = 0.0
    s_max: float = 400.0
    n_s: int = 401
    n_t: int = 400
    theta: float = 1.0

    def __attrs_post_init__(self):
        if not 0.0 <= self.s_min < self.s_max:
            raise ConfigurationError("need 0 <= s_min < s_max, got {} and {}".format(self.s_min, self.s_max))
        if self.n_s < MIN_NODES or self.n_t < MIN_NODES:
            raise ConfigurationError("n_s and n_t must be at least {}".format(MIN_NODES))
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0.5, 1], got {}".format(self.theta))

    @property
    def spots(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n_s)

    def refined(self) -> "PdeGrid":
        """Halve both spacings, keeping every old spot node."""
        return attrs.evolve(self, n_s=2 * self.n_s - 1, n_t=2 * self.n_t)


@attrs.frozen
class PdeCoefficients:
    """
    Data of the pre-default PDE.

    :param spot: S0, must lie inside the grid
    :param vol: volatility
    :param maturity: T
    :param f_pos: borrowing rate
    :param f_neg: lending rate
    :param c_tilde: collateral accrual rate
    :param intensity: first-to-default intensity lambda >= 0
    :param payoff: terminal cash flow as a function of S
    :param theta_fn: on-default payment theta(t, S)
    :param collateral_fn: collateral C(t, S)
    :param rehypothecation: funding account net of collateral
    :param rate: risk-free rate; read only by the no-rehypothecation collateral term
    """

    spot: float
    vol: float
    maturity: float
    f_pos: float
    f_neg: float
    c_tilde: float = 0.0
    intensity: float = 0.0
    payoff: object = None
    theta_fn: object = _zero
    collateral_fn: object = _zero
    rehypothecation: bool = True
    rate: float = 0.0

    def __attrs_post_init__(self):
        if self.intensity < 0:
            raise ConfigurationError("intensity must be non-negative, got {}".format(self.intensity))
        if self.maturity <= 0 or self.vol < 0:
            raise ConfigurationError("maturity must be positive and vol non-negative")

    @classmethod
    def call(cls, strike: float, position: int = 1, **kwargs) -> "PdeCoefficients":
        return cls(payoff=lambda s: position * np.maximum(s - strike, 0.0), **kwargs)

    def with_rate(self, rate: float) -> "PdeCoefficients":
        return attrs.evolve(self, rate=rate)


@attrs.define
class PdeSolution:
    spots: np.ndarray
    times: np.ndarray
    values: np.ndarray
    sweeps: list

    def value_at(self, spot: float, t_index: int = 0) -> float:
        return float(np.interp(spot, self.spots, self.values[t_index]))

    @property
    def max_sweeps(self) -> int:
        return max(self.sweeps) if self.sweeps else 0


def _funding_account(values, collateral, spots, ds, rehypothecation):
    hedge = spots * np.gradient(values, ds)
    return values - hedge - (collateral if rehypothecation else 0.0)


def _operator_bands(spots, ds, vol, rates, intensity):
    diffusion = 0.5 * vol**2 * spots**2 / ds**2
    drift = rates * spots / (2.0 * ds)
    lower = diffusion - drift
    diag = -2.0 * diffusion - rates - intensity
    upper = diffusion + drift
    # s_min row: no optionality left, only discounting
    lower[0], diag[0], upper[0] = 0.0, -rates[0] - intensity, 0.0
    # s_max row: V_SS = 0 with a one-sided drift
    one_sided = rates[-1] * spots[-1] / ds
    lower[-1], diag[-1], upper[-1] = -one_sided, one_sided - rates[-1] - intensity, 0.0
    return lower, diag, upper


def _apply(bands, values):
    lower, diag, upper = bands
    out = diag * values
    out[1:] += lower[1:] * values[:-1]
    out[:-1] += upper[:-1] * values[1:]
    return out


def _source(coeffs: PdeCoefficients, t, spots, rates):
    collateral = np.asarray(coeffs.collateral_fn(t, spots), dtype=float)
    carry = (rates - coeffs.c_tilde) if coeffs.rehypothecation else (coeffs.rate - coeffs.c_tilde)
    return carry * collateral + coeffs.intensity * np.asarray(coeffs.theta_fn(t, spots), dtype=float)


def _policy_rates(coeffs, values, t, spots, ds):
    collateral = np.asarray(coeffs.collateral_fn(t, spots), dtype=float)
    funding = _funding_account(values, collateral, spots, ds, coeffs.rehypothecation)
    return np.where(funding > 0, coeffs.f_pos, coeffs.f_neg)


def solve_predefault_pde(coeffs: PdeCoefficients, grid: PdeGrid, max_sweeps: int = MAX_SWEEPS) -> PdeSolution:
    """
    Solve the pre-default PDE backward from maturity

    :param coeffs: PDE data
    :param grid: discretization
    :param max_sweeps: policy iterations allowed per time level
    :return: PdeSolution with one row per time level, row 0 at t = 0
    :raises SolverError: when the funding-sign policy does not settle
    """
    if not grid.s_min < coeffs.spot < grid.s_max:
        raise ConfigurationError("spot {} lies outside [{}, {}]".format(coeffs.spot, grid.s_min, grid.s_max))
    spots = grid.spots
    ds = spots[1] - spots[0]
    times = np.linspace(0.0, coeffs.maturity, grid.n_t + 1)
    dt = times[1] - times[0]
    theta = grid.theta

    values = np.empty((grid.n_t + 1, grid.n_s))
    payoff = coeffs.payoff(spots) if coeffs.payoff is not None else np.zeros_like(spots)
    values[-1] = payoff
    sweeps = []

    for n in range(grid.n_t - 1, -1, -1):
        known = values[n + 1]
        t_known, t_new = times[n + 1], times[n]
        known_rates = _policy_rates(coeffs, known, t_known, spots, ds)
        explicit = np.zeros_like(known)
        if theta < 1.0:
            explicit_bands = _operator_bands(spots, ds, coeffs.vol, known_rates, coeffs.intensity)
            explicit = (1.0 - theta) * dt * (
                _apply(explicit_bands, known) + _source(coeffs, t_known, spots, known_rates)
            )

        rates = known_rates
        for sweep in range(1, max_sweeps + 1):
            lower, diag, upper = _operator_bands(spots, ds, coeffs.vol, rates, coeffs.intensity)
            banded = np.zeros((3, grid.n_s))
            banded[0, 1:] = -theta * dt * upper[:-1]
            banded[1] = 1.0 - theta * dt * diag
            banded[2, :-1] = -theta * dt * lower[1:]
            rhs = known + explicit + theta * dt * _source(coeffs, t_new, spots, rates)
            current = solve_banded((1, 1), banded, rhs)
            updated = _policy_rates(coeffs, current, t_new, spots, ds)
            if np.array_equal(updated, rates):
                break
            rates = updated
        else:
            raise SolverError(
                "funding-sign policy did not settle at t={:.4f} after {} sweeps".format(t_new, max_sweeps)
            )
        values[n] = current
        sweeps.append(sweep)

    diagnostics.debug(
        "pde solved: V(0, S0)={:.4f}, max sweeps {}".format(np.interp(coeffs.spot, spots, values[0]), max(sweeps)), 1
    )
    return PdeSolution(spots=spots, times=times, values=values, sweeps=sweeps)


def check_r_invariance(coeffs: PdeCoefficients, grid: PdeGrid, r_values) -> float:
    """
    Spread of the PDE price at (0, S0) across risk-free rates

    :param coeffs: PDE data, market rates and functions held fixed
    :param grid: discretization
    :param r_values: risk-free rates, the first one is the reference
    :return: max |V(0, S0; r) - V(0, S0; r_ref)|
    """
    prices = [solve_predefault_pde(coeffs.with_rate(r), grid).value_at(coeffs.spot) for r in r_values]
    return max(abs(p - prices[0]) for p in prices)
