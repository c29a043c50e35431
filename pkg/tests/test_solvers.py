import numpy as np
import pytest

from spmtl.core import TaskDataset, TaskKind, logistic_loss_vec
from spmtl.solvers import (
    AnchoredPenalty,
    ConvergenceError,
    psd_sqrt,
    regularized_inverse,
    solve_penalized_least_squares,
    solve_penalized_logistic,
    top_h_eigenvectors,
)


def reg_task(X, y, task_id=0):
    return TaskDataset(task_id=task_id, X=np.asarray(X, float), y=np.asarray(y, float))


def cls_task(X, y, task_id=0):
    return TaskDataset(
        task_id=task_id, X=np.asarray(X, float), y=np.asarray(y, float),
        kind=TaskKind.BINARY_CLASSIFICATION,
    )


def random_psd(rng, d, floor=0.1):
    A = rng.standard_normal((d, d))
    M = A @ A.T / d + floor * np.eye(d)
    return (M + M.T) / 2.0


def ls_objective(task, pen, w):
    r = task.y - task.X @ w
    return float(r @ r) / task.n_examples + pen.value(w)


def gradient_descent_oracle(task, pen, iters=200_000, tol=1e-10):
    """Independent first-order solver for the penalized least-squares objective."""
    n = task.n_examples
    X, y = task.X, task.y
    w = np.zeros(task.d)

    def grad(w):
        return 2.0 * (X.T @ (X @ w - y)) / n + pen.gradient(w)

    # Lipschitz constant of the gradient bounds the safe step size
    L = 2.0 * (np.linalg.eigvalsh(X.T @ X / n)[-1] + pen.gamma * np.linalg.eigvalsh(pen.M)[-1])
    step = 1.0 / L
    for _ in range(iters):
        g = grad(w)
        if np.linalg.norm(g) < tol:
            break
        w = w - step * g
    return w


class TestPenalizedLeastSquares:
    def test_unpenalized_square_system(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        y = rng.standard_normal(3)
        # gamma must stay positive; make the penalty negligible instead
        pen = AnchoredPenalty(M=np.eye(3), m=np.zeros(3), gamma=1e-14)
        w = solve_penalized_least_squares(reg_task(X, y), pen)
        np.testing.assert_allclose(w, np.linalg.solve(X, y), atol=1e-5)

    def test_identity_design_closed_form(self):
        # X = I_d, N = d, m = 0, M = I: stationarity gives w = y / (1 + gamma*d)
        d, gamma = 4, 0.5
        y = np.array([1.0, -2.0, 3.0, 0.5])
        pen = AnchoredPenalty(M=np.eye(d), m=np.zeros(d), gamma=gamma)
        w = solve_penalized_least_squares(reg_task(np.eye(d), y), pen)
        np.testing.assert_allclose(w, y / (1.0 + gamma * d), atol=1e-10)

    def test_matches_gradient_descent_oracle(self):
        rng = np.random.default_rng(42)
        X = rng.standard_normal((5, 3))
        y = rng.standard_normal(5)
        pen = AnchoredPenalty(M=random_psd(rng, 3), m=rng.standard_normal(3), gamma=0.8)
        task = reg_task(X, y)
        w = solve_penalized_least_squares(task, pen)
        w_oracle = gradient_descent_oracle(task, pen)
        np.testing.assert_allclose(w, w_oracle, atol=1e-6)

    def test_stationarity_residual(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n, d = rng.integers(3, 12), rng.integers(2, 8)
            task = reg_task(rng.standard_normal((n, d)), rng.standard_normal(n))
            pen = AnchoredPenalty(M=random_psd(rng, d), m=rng.standard_normal(d), gamma=0.5)
            w = solve_penalized_least_squares(task, pen)
            grad = 2.0 * (task.X.T @ (task.X @ w - task.y)) / n + pen.gradient(w)
            assert np.linalg.norm(grad) < 1e-8

    def test_rejects_classification_task(self):
        task = cls_task([[1.0], [-1.0]], [1.0, -1.0])
        pen = AnchoredPenalty(M=np.eye(1), m=np.zeros(1), gamma=1.0)
        with pytest.raises(ValueError):
            solve_penalized_least_squares(task, pen)


class TestPenalizedLogistic:
    def test_symmetric_data_yields_zero_margin_at_origin(self):
        X = np.array([[1.0, 0.5], [-1.0, -0.5]])
        y = np.array([1.0, -1.0])
        pen = AnchoredPenalty(M=np.eye(2), m=np.zeros(2), gamma=0.5)
        w = solve_penalized_logistic(cls_task(X, y), pen)
        margins = X @ w
        assert margins[0] == pytest.approx(-margins[1], abs=1e-8)

    def test_matches_1d_grid_oracle(self):
        # strongly separated scalar data; oracle = fine grid search over w
        X = np.array([[2.0], [3.0], [-2.5], [-2.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        task = cls_task(X, y)
        pen = AnchoredPenalty(M=np.eye(1), m=np.zeros(1), gamma=1.0)

        grid = np.linspace(-3.0, 3.0, 240_001)
        z = y[None, :] * (grid[:, None] * X[:, 0][None, :])
        objs = logistic_loss_vec(z).mean(axis=1) + pen.gamma * grid**2
        w_oracle = grid[np.argmin(objs)]

        w = solve_penalized_logistic(task, pen)
        assert w[0] == pytest.approx(w_oracle, abs=1e-4)

    def test_huge_gamma_pins_to_anchor(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((8, 2))
        y = np.sign(rng.standard_normal(8))
        m = np.array([0.3, -0.2])
        pen = AnchoredPenalty(M=np.eye(2), m=m, gamma=1e6)
        w = solve_penalized_logistic(cls_task(X, y), pen)
        np.testing.assert_allclose(w, m, atol=1e-6)

    def test_objective_never_exceeds_start(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            X = rng.standard_normal((10, 3))
            y = np.sign(rng.standard_normal(10))
            y[y == 0] = 1.0
            m = rng.standard_normal(3)
            pen = AnchoredPenalty(M=random_psd(rng, 3), m=m, gamma=0.2)
            task = cls_task(X, y)
            w = solve_penalized_logistic(task, pen)

            def obj(v):
                return float(np.mean(logistic_loss_vec(y * (X @ v)))) + pen.value(v)

            assert obj(w) <= obj(m) + 1e-12

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((12, 4))
        y = np.sign(rng.standard_normal(12))
        y[y == 0] = 1.0
        task = cls_task(X, y)
        pen = AnchoredPenalty(M=np.eye(4), m=np.zeros(4), gamma=0.1)
        w1 = solve_penalized_logistic(task, pen)
        w2 = solve_penalized_logistic(task, pen)
        np.testing.assert_array_equal(w1, w2)

    def test_max_iters_error_carries_grad_norm(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((30, 3))
        y = np.sign(rng.standard_normal(30))
        y[y == 0] = 1.0
        pen = AnchoredPenalty(M=np.eye(3), m=np.zeros(3), gamma=0.5)
        with pytest.raises(ConvergenceError) as err:
            solve_penalized_logistic(cls_task(X, y), pen, tol=1e-16, max_iters=1)
        assert err.value.grad_norm > 0


class TestPsdSqrt:
    def test_identity(self):
        np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-12)

    def test_diagonal(self):
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)

    def test_reconstruction(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            A = rng.standard_normal((5, 5))
            C = A @ A.T
            S = psd_sqrt(C)
            np.testing.assert_allclose(S @ S, C, atol=1e-8 * max(np.linalg.norm(C), 1.0))
            np.testing.assert_allclose(S, S.T, atol=1e-12)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            psd_sqrt(np.diag([1.0, -1.0]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestTopHEigenvectors:
    def test_diagonal(self):
        U = top_h_eigenvectors(np.diag([3.0, 2.0, 1.0]), 2)
        np.testing.assert_allclose(U, np.eye(3)[:2], atol=1e-12)

    def test_rank_one(self):
        w = np.array([3.0, -4.0])
        U = top_h_eigenvectors(np.outer(w, w), 1)
        expected = w / np.linalg.norm(w)
        if expected[0] < 0:
            expected = -expected
        np.testing.assert_allclose(U[0], expected, atol=1e-12)

    def test_full_basis_orthonormal(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            A = rng.standard_normal((6, 6))
            C = A @ A.T
            U = top_h_eigenvectors(C, 6)
            np.testing.assert_allclose(U @ U.T, np.eye(6), atol=1e-10)

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        C = random_psd(rng, 4)
        U = top_h_eigenvectors(C, 3)
        for row in U:
            first_nonzero = row[np.abs(row) > 1e-12][0]
            assert first_nonzero > 0

    def test_h_bounds(self):
        with pytest.raises(ValueError):
            top_h_eigenvectors(np.eye(3), 0)
        with pytest.raises(ValueError):
            top_h_eigenvectors(np.eye(3), 4)


class TestRegularizedInverse:
    def test_uniform_diagonal(self):
        from spmtl.core import FeatureMatrix

        D = FeatureMatrix(D=np.eye(4) / 4.0)
        np.testing.assert_allclose(regularized_inverse(D, 0.0), 4.0 * np.eye(4), atol=1e-10)

    def test_diagonal_arithmetic(self):
        from spmtl.core import FeatureMatrix

        D = FeatureMatrix(D=np.diag([1.0, 0.0]))
        inv = regularized_inverse(D, 1e-6)
        np.testing.assert_allclose(np.diag(inv), [1.0 / (1.0 + 1e-6), 1e6], rtol=1e-9)

    def test_reconstruction(self):
        from spmtl.core import FeatureMatrix

        rng = np.random.default_rng(4)
        A = rng.standard_normal((5, 5))
        C = A @ A.T
        D = FeatureMatrix(D=C / np.trace(C))
        eps = 1e-6
        prod = (D.D + eps * np.eye(5)) @ regularized_inverse(D, eps)
        np.testing.assert_allclose(prod, np.eye(5), atol=1e-8)


class TestLeastSquaresOracleSweep:
    def test_hundred_random_instances(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            n = int(rng.integers(4, 10))
            d = int(rng.integers(2, 5))
            task = reg_task(rng.standard_normal((n, d)), rng.standard_normal(n))
            pen = AnchoredPenalty(
                M=random_psd(rng, d, floor=0.2),
                m=rng.standard_normal(d),
                gamma=float(rng.uniform(0.1, 2.0)),
            )
            w = solve_penalized_least_squares(task, pen)
            w_oracle = gradient_descent_oracle(task, pen, iters=100_000, tol=1e-10)
            np.testing.assert_allclose(w, w_oracle, atol=1e-6)
            assert ls_objective(task, pen, w) <= ls_objective(task, pen, w_oracle) + 1e-9
