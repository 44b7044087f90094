"""
Cross-path least-squares regression used for the conditional expectations of
the backward recursion.
"""

import attrs
import numpy as np

from src.errors import ConfigurationError, RegressionError

POWER_SERIES = "power"


@attrs.frozen
class RegressionBasis:
    """
    Power-series basis psi(x) = (1, x, ..., x^order).

    :param order: polynomial degree, at least 1
    :param kind: only "power" is supported
    """

    order: int = attrs.field(default=2)
    kind: str = attrs.field(default=POWER_SERIES)

    @order.validator
    def _check_order(self, attribute, value):
        if int(value) < 1:
            raise ConfigurationError("regression order must be at least 1, got {}".format(value))

    @kind.validator
    def _check_kind(self, attribute, value):
        if value != POWER_SERIES:
            raise ConfigurationError("unsupported regression basis {!r}".format(value))

    @property
    def size(self) -> int:
        return self.order + 1

    def design(self, x) -> np.ndarray:
        """
        Evaluate the basis on every path

        :param x: regressor per path
        :return: N x (order + 1) design matrix, constant column first
        """
        return np.vander(np.asarray(x, dtype=float), self.size, increasing=True)


@attrs.frozen
class RegressionFit:
    coefficients: np.ndarray = attrs.field(eq=False)
    basis: RegressionBasis
    r_squared: float

    def predict(self, x) -> np.ndarray:
        return self.basis.design(x) @ self.coefficients


def fit_regression(x, y, basis: RegressionBasis = RegressionBasis()) -> RegressionFit:
    """
    Ordinary least squares of y on psi(x)

    :param x: regressor values across paths
    :param y: targets across paths
    :param basis: power-series basis
    :return: RegressionFit with the coefficients and R^2
    :raises RegressionError: on too few paths or a rank-deficient design
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigurationError("regressor and target must be 1-d arrays of equal length")
    if len(x) < basis.order + 2:
        raise RegressionError(
            "{} paths are too few for an order {} regression, need {}".format(len(x), basis.order, basis.order + 2)
        )

    # scaling keeps the power columns comparable, coefficients are mapped back below
    scale = float(np.max(np.abs(x))) or 1.0
    design = basis.design(x / scale)
    if np.linalg.matrix_rank(design) < basis.size:
        raise RegressionError(
            "design matrix is rank deficient for order {}, try a lower order".format(basis.order)
        )
    coefficients, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    coefficients = coefficients / scale ** np.arange(basis.size)

    fitted = basis.design(x) @ coefficients
    total = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - np.sum((y - fitted) ** 2) / total if total > 0 else 1.0
    return RegressionFit(coefficients=coefficients, basis=basis, r_squared=float(r_squared))
