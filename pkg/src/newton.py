"""
Batched Newton-Raphson with a finite-difference Jacobian.

Every path carries its own small nonlinear system; all systems are iterated
together and a path stops moving once its residual is within tolerance.
"""

import attrs
import numpy as np

from src.errors import ConfigurationError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
RELATIVE_BUMP = 1e-6


@attrs.frozen
class NewtonResult:
    """
    :param x: N x k solution (last iterate for paths that did not converge)
    :param converged: boolean mask per path
    :param iterations: Newton updates applied per path
    """

    x: np.ndarray = attrs.field(eq=False)
    converged: np.ndarray = attrs.field(eq=False)
    iterations: np.ndarray = attrs.field(eq=False)

    @property
    def failed_paths(self) -> np.ndarray:
        return np.flatnonzero(~self.converged)


def residual_norm(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Max-norm of the residual scaled by the size of the unknowns

    :param values: N x k residuals
    :param x: N x k unknowns
    :return: per-path norm, compared against the tolerance
    """
    scale = 1.0 + np.max(np.abs(x), axis=1)
    return np.max(np.abs(values), axis=1) / scale


def fd_jacobian(residual, x: np.ndarray, base: np.ndarray = None) -> np.ndarray:
    """
    Forward-difference Jacobian of a batched residual

    :param residual: maps N x k to N x k
    :param x: point, N x k
    :param base: residual(x) when already known
    :return: N x k x k Jacobian, bump 1e-6 max(1, |x|) per coordinate
    """
    base = residual(x) if base is None else base
    n, k = x.shape
    jacobian = np.empty((n, k, k))
    for col in range(k):
        bump = RELATIVE_BUMP * np.maximum(1.0, np.abs(x[:, col]))
        shifted = x.copy()
        shifted[:, col] += bump
        jacobian[:, :, col] = (residual(shifted) - base) / bump[:, None]
    return jacobian


def _solve(jacobian: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(jacobian, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.einsum("nij,nj->ni", np.linalg.pinv(jacobian), rhs)


def newton_batch(residual, x0, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> NewtonResult:
    """
    Solve residual(x) = 0 path by path

    :param residual: callable mapping (N x k, path indices) to N x k residuals
    :param x0: initial guess, N x k
    :param tol: tolerance on the scaled residual max-norm
    :param max_iter: maximum Newton updates per path
    :return: NewtonResult
    """
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("Newton needs tol > 0 and max_iter >= 1")
    x = np.array(x0, dtype=float)
    n = x.shape[0]
    iterations = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)

    active = np.arange(n)
    for _ in range(max_iter + 1):
        values = residual(x[active], active)
        done = residual_norm(values, x[active]) <= tol
        converged[active[done]] = True
        keep = ~done & np.all(np.isfinite(values), axis=1)
        active, values = active[keep], values[keep]
        if active.size == 0 or np.all(iterations[active] >= max_iter):
            break

        def restricted(z, paths=active):
            return residual(z, paths)

        jacobian = fd_jacobian(restricted, x[active], values)
        x[active] -= _solve(jacobian, values)
        iterations[active] += 1

    return NewtonResult(x=x, converged=converged, iterations=iterations)
