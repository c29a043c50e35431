"""Shared domain types, loss functions, and the per-task selection score.

Everything here is an immutable value object (arrays are frozen after
construction) so instances can be shared freely between threads. Losses and
scores are pure functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class TaskKind(enum.Enum):
    REGRESSION = "regression"
    BINARY_CLASSIFICATION = "binary_classification"


class TauMode(enum.Enum):
    HARD = "hard"
    ENTROPY = "entropy"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TaskDataset:
    """One task: an N_t x d design matrix and its N_t targets."""

    task_id: int
    X: np.ndarray
    y: np.ndarray
    kind: TaskKind = TaskKind.REGRESSION

    def __post_init__(self):
        X = _freeze(self.X)
        y = _freeze(self.y)
        if X.ndim != 2:
            raise ValueError(f"task {self.task_id}: X must be 2-D, got shape {X.shape}")
        if y.ndim != 1:
            raise ValueError(f"task {self.task_id}: y must be 1-D, got shape {y.shape}")
        if X.shape[0] < 1:
            raise ValueError(f"task {self.task_id}: needs at least one example")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"task {self.task_id}: X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if self.kind is TaskKind.BINARY_CLASSIFICATION:
            values = set(np.unique(y))
            if not values <= {-1.0, 1.0}:
                raise ValueError(
                    f"task {self.task_id}: classification labels must be in {{-1,+1}}, "
                    f"got {sorted(values)}"
                )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_examples(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def normalize_labels(y: np.ndarray) -> np.ndarray:
    """Map {0,1} labels onto {-1,+1}; leave {-1,+1} untouched."""
    y = np.asarray(y, dtype=float)
    values = set(np.unique(y))
    if values <= {-1.0, 1.0}:
        return y
    if values <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    raise ValueError(f"cannot interpret labels {sorted(values)} as binary")


@dataclass(frozen=True)
class MultitaskDataset:
    """An ordered collection of tasks over one shared feature space."""

    tasks: tuple[TaskDataset, ...]
    d: int

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if len(tasks) < 1:
            raise ValueError("need at least one task")
        ids = [t.task_id for t in tasks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"task ids must be unique, got {ids}")
        for t in tasks:
            if t.d != self.d:
                raise ValueError(
                    f"task {t.task_id} has {t.d} features, dataset declares {self.d}"
                )
        object.__setattr__(self, "tasks", tasks)

    @classmethod
    def of(cls, tasks) -> "MultitaskDataset":
        tasks = tuple(tasks)
        if not tasks:
            raise ValueError("need at least one task")
        return cls(tasks=tasks, d=tasks[0].d)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def task_ids(self) -> tuple[int, ...]:
        return tuple(t.task_id for t in self.tasks)

    def __iter__(self):
        return iter(self.tasks)


@dataclass(frozen=True)
class ModelParams:
    """Stacked task parameters: column t of W is the weight vector of task t."""

    W: np.ndarray

    def __post_init__(self):
        W = _freeze(self.W)
        if W.ndim != 2:
            raise ValueError(f"W must be 2-D (d x T), got shape {W.shape}")
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.W.shape[1]

    def column(self, t: int) -> np.ndarray:
        return self.W[:, t]


@dataclass(frozen=True)
class TaskWeights:
    """Per-task selection weights tau.

    Hard mode keeps the weights in {delta, 1}; entropy mode keeps them on the
    probability simplex.
    """

    tau: np.ndarray
    mode: TauMode

    def __post_init__(self):
        tau = _freeze(self.tau)
        if tau.ndim != 1:
            raise ValueError(f"tau must be 1-D, got shape {tau.shape}")
        if np.any(tau <= 0) or np.any(tau > 1):
            raise ValueError("tau entries must lie in (0, 1]")
        if self.mode is TauMode.ENTROPY:
            s = float(tau.sum())
            if abs(s - 1.0) > 1e-9:
                raise ValueError(f"entropy-mode tau must sum to 1, got {s!r}")
        else:
            distinct = np.unique(tau)
            if len(distinct) > 2:
                raise ValueError("hard-mode tau may take at most two distinct values")
            if len(distinct) == 2 and distinct[1] != 1.0:
                raise ValueError("hard-mode tau values must be {delta, 1}")
        object.__setattr__(self, "tau", tau)

    def __len__(self) -> int:
        return self.tau.shape[0]


@dataclass(frozen=True)
class MeanVector:
    """Shared knowledge for mean-regularized learning: the anchor vector w0."""

    w0: np.ndarray

    def __post_init__(self):
        w0 = _freeze(self.w0)
        if w0.ndim != 1:
            raise ValueError(f"w0 must be 1-D, got shape {w0.shape}")
        object.__setattr__(self, "w0", w0)

    @property
    def d(self) -> int:
        return self.w0.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    """Shared knowledge for feature learning: a symmetric PSD matrix with unit trace."""

    D: np.ndarray

    def __post_init__(self):
        D = _freeze(self.D)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError(f"D must be square, got shape {D.shape}")
        asym = float(np.max(np.abs(D - D.T)))
        if asym >= 1e-10:
            raise ValueError(f"D must be symmetric, max |D - D^T| = {asym:.3e}")
        min_eig = float(np.linalg.eigvalsh(D)[0])
        if min_eig < -1e-10:
            raise ValueError(f"D must be PSD, min eigenvalue = {min_eig:.3e}")
        tr = float(np.trace(D))
        if abs(tr - 1.0) > 1e-8:
            raise ValueError(f"D must have unit trace, got {tr!r}")
        object.__setattr__(self, "D", D)

    @property
    def d(self) -> int:
        return self.D.shape[0]


@dataclass(frozen=True)
class Subspace:
    """Shared knowledge for structure optimization: orthonormal rows spanning the subspace."""

    U: np.ndarray

    def __post_init__(self):
        U = _freeze(self.U)
        if U.ndim != 2:
            raise ValueError(f"U must be 2-D (h x d), got shape {U.shape}")
        h, d = U.shape
        if not 1 <= h <= d:
            raise ValueError(f"need 1 <= h <= d, got h={h}, d={d}")
        gram_err = float(np.max(np.abs(U @ U.T - np.eye(h))))
        if gram_err > 1e-8:
            raise ValueError(f"rows of U must be orthonormal, max |UU^T - I| = {gram_err:.3e}")
        object.__setattr__(self, "U", U)

    @property
    def h(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]


SharedKnowledge = Union[MeanVector, FeatureMatrix, Subspace]


@dataclass(frozen=True)
class PacingConfig:
    """Knobs of the self-paced loop and its per-task penalty strength.

    lambda0=None defers the initial threshold to the median of the
    first-iteration task scores.
    """

    gamma: float
    lambda0: float | None = None
    c: float = 1.1
    delta: float = 0.01
    epsilon: float = 1e-6
    max_outer_iters: int = 50
    h: int | None = None
    lambda_max: float = math.inf
    feature_eps: float = 1e-8

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.lambda0 is not None and self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive when given")
        if self.c <= 1:
            raise ValueError("pacing factor c must exceed 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.h is not None and self.h < 1:
            raise ValueError("subspace dimension h must be at least 1")
        if self.feature_eps < 0:
            raise ValueError("feature_eps must be nonnegative")


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration snapshot of the selection state."""

    iteration: int
    lam: float
    tau: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", _freeze(self.tau))
        object.__setattr__(self, "scores", _freeze(self.scores))


@dataclass(frozen=True)
class TrainReport:
    """Everything a fit produces: final parameters plus the full trace."""

    W: ModelParams
    theta: SharedKnowledge
    tau_history: tuple[IterationRecord, ...]
    objective_history: tuple[float, ...]
    iterations_run: int
    converged: bool
    # (before w-step, after w-step, after tau-step, after theta-step) per
    # iteration, all at that iteration's threshold.
    substep_objectives: tuple[tuple[float, float, float, float], ...] = field(default=())

    def __post_init__(self):
        if len(self.tau_history) != self.iterations_run:
            raise ValueError(
                f"tau_history has {len(self.tau_history)} entries for "
                f"{self.iterations_run} iterations"
            )


def squared_loss(y_true: float, y_pred: float) -> float:
    return (y_true - y_pred) ** 2


def logistic_loss(y_true: float, margin: float) -> float:
    """log(1 + exp(-y*margin)) with branching that avoids overflow."""
    z = y_true * margin
    if z > 30.0:
        return math.exp(-z)
    if z < -30.0:
        return -z
    return math.log1p(math.exp(-z))


def logistic_loss_vec(z: np.ndarray) -> np.ndarray:
    """Vectorized log(1 + exp(-z)) over the signed margins z = y * (Xw)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    hi = z > 30.0
    lo = z < -30.0
    mid = ~(hi | lo)
    out[hi] = np.exp(-z[hi])
    out[lo] = -z[lo]
    out[mid] = np.log1p(np.exp(-z[mid]))
    return out


def task_average_loss(task: TaskDataset, w: np.ndarray) -> float:
    """Mean per-example loss of w on one task's training set."""
    w = np.asarray(w, dtype=float)
    if w.shape != (task.d,):
        raise ValueError(f"w has shape {w.shape}, task {task.task_id} needs ({task.d},)")
    pred = task.X @ w
    if task.kind is TaskKind.REGRESSION:
        r = task.y - pred
        return float(r @ r) / task.n_examples
    return float(np.mean(logistic_loss_vec(task.y * pred)))


def task_score(
    task: TaskDataset,
    w: np.ndarray,
    theta: SharedKnowledge,
    gamma: float,
    eps: float = 1e-8,
) -> float:
    """Training loss plus knowledge penalty: the scalar both tau rules consume."""
    from .knowledge import penalty

    return task_average_loss(task, w) + penalty(w, theta, gamma, eps=eps)
