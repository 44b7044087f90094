import numpy as np
import pytest
from pytest_check import check

from src import newton
from src.errors import ConfigurationError


def test_square_roots():
    targets = np.array([2.0, 3.0, 9.0, 100.0])

    def residual(z, paths):
        return z**2 - targets[paths, None]

    result = newton.newton_batch(residual, np.ones((4, 1)))
    with check:
        assert result.converged.all()
        assert result.x[:, 0] == pytest.approx(np.sqrt(targets), rel=1e-7)
        assert result.iterations.max() <= 12
        assert result.failed_paths.size == 0


def test_linear_system_takes_one_step():
    a = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([[9.0, 8.0], [1.0, 1.0], [0.0, 5.0]])

    def residual(z, paths):
        return z @ a.T - b[paths]

    result = newton.newton_batch(residual, np.zeros((3, 2)))
    with check:
        assert result.converged.all()
        assert list(result.iterations) == [1, 1, 1]
        assert result.x == pytest.approx(np.linalg.solve(a, b.T).T, abs=1e-7)


def test_no_real_root_does_not_converge():
    def residual(z, paths):
        return z**2 + 1.0

    result = newton.newton_batch(residual, np.full((2, 1), 0.5), max_iter=5)
    with check:
        assert not result.converged.any()
        assert list(result.failed_paths) == [0, 1]
        assert result.iterations.max() <= 5


def test_already_converged_start():
    result = newton.newton_batch(lambda z, paths: z - 1.0, np.ones((2, 1)))
    with check:
        assert result.converged.all()
        assert list(result.iterations) == [0, 0]


def test_fd_jacobian():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])

    def residual(z):
        return np.column_stack([z[:, 0] * z[:, 1], z[:, 0] ** 2])

    jacobian = newton.fd_jacobian(residual, x)
    with check:
        assert jacobian.shape == (2, 2, 2)
        np.testing.assert_allclose(jacobian[0], [[2.0, 1.0], [2.0, 0.0]], atol=1e-4)
        np.testing.assert_allclose(jacobian[1], [[-1.0, 3.0], [6.0, 0.0]], atol=1e-4)


def test_residual_norm_is_scaled():
    norms = newton.residual_norm(np.array([[1.0, -3.0]]), np.array([[0.0, 99.0]]))
    assert norms[0] == pytest.approx(0.03)


def test_settings_validation():
    with check:
        with pytest.raises(ConfigurationError):
            newton.newton_batch(lambda z, p: z, np.ones((1, 1)), tol=0.0)
    with pytest.raises(ConfigurationError):
        newton.newton_batch(lambda z, p: z, np.ones((1, 1)), max_iter=0)
