"""Per-task penalized minimization and the linear-algebra kernels behind the
knowledge updates.

Everything is a pure function; callers may solve all tasks of one iteration in
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TaskDataset, TaskKind, logistic_loss_vec

# Added inside every linear solve so rank-deficient X^T X stays invertible even
# when gamma*M is singular too (e.g. the subspace penalty I - U^T U).
RIDGE_FLOOR = 1e-10


class ConvergenceError(RuntimeError):
    """Iterative solve ran out of iterations; carries the last gradient norm."""

    def __init__(self, message: str, grad_norm: float):
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class AnchoredPenalty:
    """Quadratic penalty gamma * (w - m)^T M (w - m) with symmetric PSD M."""

    M: np.ndarray
    m: np.ndarray
    gamma: float

    def __post_init__(self):
        M = np.array(self.M, dtype=float, copy=True)
        m = np.array(self.m, dtype=float, copy=True)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"M must be square, got shape {M.shape}")
        if m.shape != (M.shape[0],):
            raise ValueError(f"anchor m has shape {m.shape}, M is {M.shape}")
        asym = float(np.max(np.abs(M - M.T)))
        if asym >= 1e-10:
            raise ValueError(f"M must be symmetric, max |M - M^T| = {asym:.3e}")
        if float(np.linalg.eigvalsh(M)[0]) < -1e-10:
            raise ValueError("M must be positive semidefinite")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        M.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "m", m)

    @property
    def d(self) -> int:
        return self.M.shape[0]

    def value(self, w: np.ndarray) -> float:
        r = np.asarray(w, dtype=float) - self.m
        return float(self.gamma * (r @ self.M @ r))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return 2.0 * self.gamma * (self.M @ (np.asarray(w, dtype=float) - self.m))


def _solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"penalized system is singular (cond ~ {np.linalg.cond(A):.3e})"
        ) from exc
    if not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError(
            f"penalized system is numerically singular (cond ~ {np.linalg.cond(A):.3e})"
        )
    return w


def solve_penalized_least_squares(task: TaskDataset, penalty: AnchoredPenalty) -> np.ndarray:
    """Minimize (1/N)||y - Xw||^2 + gamma (w-m)^T M (w-m) in closed form."""
    if task.kind is not TaskKind.REGRESSION:
        raise ValueError(f"task {task.task_id} is not a regression task")
    if penalty.d != task.d:
        raise ValueError(f"penalty dimension {penalty.d} != task dimension {task.d}")
    X, y, n = task.X, task.y, task.n_examples
    A = X.T @ X / n + penalty.gamma * penalty.M + RIDGE_FLOOR * np.eye(task.d)
    b = X.T @ y / n + penalty.gamma * (penalty.M @ penalty.m)
    return _solve_spd(A, b)


def solve_penalized_logistic(
    task: TaskDataset,
    penalty: AnchoredPenalty,
    tol: float = 1e-8,
    max_iters: int = 100,
) -> np.ndarray:
    """Minimize mean logistic loss plus the anchored penalty by damped Newton.

    Deterministic: starts at the anchor m, halves the step until the objective
    stops increasing.
    """
    if task.kind is not TaskKind.BINARY_CLASSIFICATION:
        raise ValueError(f"task {task.task_id} is not a classification task")
    if penalty.d != task.d:
        raise ValueError(f"penalty dimension {penalty.d} != task dimension {task.d}")
    X, y, n = task.X, task.y, task.n_examples

    def objective(w):
        return float(np.mean(logistic_loss_vec(y * (X @ w)))) + penalty.value(w)

    def gradient(w):
        margins = X @ w
        # d/dz log(1+e^-z) = -sigma(-z)
        sig = 1.0 / (1.0 + np.exp(np.clip(y * margins, -500, 500)))
        return -(X.T @ (y * sig)) / n + penalty.gradient(w)

    w = penalty.m.copy()
    f = objective(w)
    eye = np.eye(task.d)
    grad_norm = float(np.linalg.norm(gradient(w)))
    for _ in range(max_iters):
        g = gradient(w)
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= tol:
            return w
        margins = X @ w
        p = 1.0 / (1.0 + np.exp(-np.clip(margins, -500, 500)))
        weights = p * (1.0 - p)
        H = (X.T * weights) @ X / n + 2.0 * penalty.gamma * penalty.M + RIDGE_FLOOR * eye
        step = _solve_spd(H, -g)
        alpha = 1.0
        for _ in range(60):
            w_new = w + alpha * step
            f_new = objective(w_new)
            if f_new <= f:
                break
            alpha *= 0.5
        else:
            # No descent along the Newton direction at any step size.
            break
        w, f = w_new, f_new
    grad_norm = float(np.linalg.norm(gradient(w)))
    if grad_norm <= tol:
        return w
    raise ConvergenceError(
        f"logistic solve for task {task.task_id} did not reach tol={tol} in "
        f"{max_iters} iterations (|grad| = {grad_norm:.3e})",
        grad_norm=grad_norm,
    )


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues in [-1e-10, 0) are clamped to 0."""
    C = np.asarray(C, dtype=float)
    asym = float(np.max(np.abs(C - C.T)))
    if asym >= 1e-10:
        raise ValueError(f"input must be symmetric, max |C - C^T| = {asym:.3e}")
    vals, vecs = np.linalg.eigh(C)
    if float(vals[0]) < -1e-10:
        raise ValueError(f"input is not PSD, min eigenvalue = {float(vals[0]):.3e}")
    vals = np.clip(vals, 0.0, None)
    S = (vecs * np.sqrt(vals)) @ vecs.T
    return (S + S.T) / 2.0


def top_h_eigenvectors(C: np.ndarray, h: int) -> np.ndarray:
    """Rows are the h leading orthonormal eigenvectors of C, eigenvalue-descending.

    Sign convention: the first entry of each row with magnitude above 1e-12 is
    made positive, so repeated runs are bit-identical.
    """
    C = np.asarray(C, dtype=float)
    d = C.shape[0]
    if not 1 <= h <= d:
        raise ValueError(f"need 1 <= h <= d, got h={h}, d={d}")
    _, vecs = np.linalg.eigh(C)
    U = vecs[:, ::-1][:, :h].T.copy()
    for i in range(h):
        nz = np.nonzero(np.abs(U[i]) > 1e-12)[0]
        if nz.size and U[i, nz[0]] < 0:
            U[i] = -U[i]
    return U


def regularized_inverse(D, eps: float) -> np.ndarray:
    """(D + eps*I)^-1 for a feature matrix D, symmetrized against roundoff."""
    mat = D.D if hasattr(D, "D") else np.asarray(D, dtype=float)
    inv = np.linalg.inv(mat + eps * np.eye(mat.shape[0]))
    return (inv + inv.T) / 2.0
