"""The alternating-minimization trainers: self-paced runs, their fixed-weight
baselines, independent/pooled/curriculum references, and the objective they
all report."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import pacing as pacing_mod
from .core import (
    FeatureMatrix,
    IterationRecord,
    MeanVector,
    ModelParams,
    MultitaskDataset,
    PacingConfig,
    SharedKnowledge,
    Subspace,
    TaskDataset,
    TaskKind,
    TaskWeights,
    TauMode,
    TrainReport,
    task_average_loss,
    task_score,
)
from .solvers import (
    AnchoredPenalty,
    solve_penalized_least_squares,
    solve_penalized_logistic,
    top_h_eigenvectors,
)
from .knowledge import penalty, update_feature_matrix, update_mean, update_subspace


class Variant(enum.Enum):
    MMTL = "MMTL"
    MTFL = "MTFL"
    MTASO = "MTASO"


@dataclass(frozen=True)
class AlgorithmSpec:
    """What to fit: knowledge family, selection rule, pacing knobs."""

    variant: Variant
    self_paced: bool
    pacing: PacingConfig
    tau_rule: TauMode = TauMode.ENTROPY
    theta0: SharedKnowledge | None = None
    seed: int = 0

    def __post_init__(self):
        if self.variant is Variant.MTASO and self.pacing.h is None:
            raise ValueError("MTASO needs the subspace dimension h in the pacing config")


@dataclass(frozen=True)
class CurriculumResult:
    """Greedy task order and the parameters committed along it."""

    order: tuple[int, ...]
    W: ModelParams

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"order must visit each task exactly once, got {self.order}")


def default_theta0(spec: AlgorithmSpec, d: int) -> SharedKnowledge:
    """Neutral initial knowledge: zero anchor, isotropic metric, or a seeded
    random orthonormal subspace."""
    if spec.variant is Variant.MMTL:
        return MeanVector(w0=np.zeros(d))
    if spec.variant is Variant.MTFL:
        return FeatureMatrix(D=np.eye(d) / d)
    h = spec.pacing.h
    if not 1 <= h <= d:
        raise ValueError(f"need 1 <= h <= d, got h={h}, d={d}")
    rng = np.random.default_rng(spec.seed)
    G = rng.standard_normal((d, d))
    C = G @ G.T
    return Subspace(U=top_h_eigenvectors(C, h))


def anchored_penalty_for(theta: SharedKnowledge, gamma: float, eps: float) -> AnchoredPenalty:
    """The (M, m) pair making the per-task solve generic across variants."""
    if isinstance(theta, MeanVector):
        return AnchoredPenalty(M=np.eye(theta.d), m=theta.w0, gamma=gamma)
    if isinstance(theta, FeatureMatrix):
        from .solvers import regularized_inverse

        return AnchoredPenalty(M=regularized_inverse(theta, eps), m=np.zeros(theta.d), gamma=gamma)
    if isinstance(theta, Subspace):
        M = np.eye(theta.d) - theta.U.T @ theta.U
        M = (M + M.T) / 2.0
        return AnchoredPenalty(M=M, m=np.zeros(theta.d), gamma=gamma)
    raise TypeError(f"unknown knowledge type {type(theta).__name__}")


def solve_task(task: TaskDataset, pen: AnchoredPenalty) -> np.ndarray:
    if task.kind is TaskKind.REGRESSION:
        return solve_penalized_least_squares(task, pen)
    return solve_penalized_logistic(task, pen)


def _update_theta(variant: Variant, W: ModelParams, tau: TaskWeights, cfg: PacingConfig) -> SharedKnowledge:
    if variant is Variant.MMTL:
        return update_mean(W, tau, cfg.gamma)
    if variant is Variant.MTFL:
        return update_feature_matrix(W, tau, eps=cfg.feature_eps)
    return update_subspace(W, tau, cfg.h)


def objective_value(
    data: MultitaskDataset,
    W: ModelParams,
    tau,
    theta: SharedKnowledge,
    gamma: float,
    lam: float,
    tau_rule: TauMode,
    eps: float = 1e-8,
) -> float:
    """Value of the joint objective: weighted (loss + penalty) plus lam * r(tau),
    where r is -|tau|_1 for the hard rule and the negated entropy otherwise."""
    t = tau.tau if isinstance(tau, TaskWeights) else np.asarray(tau, dtype=float)
    if W.n_tasks != data.n_tasks or t.shape[0] != data.n_tasks:
        raise ValueError("W, tau, and dataset disagree on the number of tasks")
    total = 0.0
    for i, task in enumerate(data):
        w = W.column(i)
        total += t[i] * (task_average_loss(task, w) + penalty(w, theta, gamma, eps=eps))
    if tau_rule is TauMode.HARD:
        r = -float(t.sum())
    else:
        r = float(t @ np.log(t))
    return total + lam * r


def _theta_delta(a: SharedKnowledge, b: SharedKnowledge) -> float:
    if isinstance(a, MeanVector):
        return float(np.max(np.abs(a.w0 - b.w0)))
    if isinstance(a, FeatureMatrix):
        return float(np.max(np.abs(a.D - b.D)))
    # compare projectors so sign/rotation of the basis rows does not matter
    return float(np.max(np.abs(a.U.T @ a.U - b.U.T @ b.U)))


def _alternate(
    data: MultitaskDataset,
    spec: AlgorithmSpec,
    pinned_tau: np.ndarray | None,
    stop_on_params: bool,
) -> TrainReport:
    """Shared engine of the self-paced loop and its fixed-weight baseline.

    pinned_tau, when given, replaces the tau rule every iteration (the
    baseline pins all-ones); stop_on_params switches the stopping test from
    tau stability to (W, theta) stability.
    """
    cfg = spec.pacing
    T, d = data.n_tasks, data.d
    theta = spec.theta0 if spec.theta0 is not None else default_theta0(spec, d)
    if cfg.h is not None and not 1 <= cfg.h <= d:
        raise ValueError(f"need 1 <= h <= d, got h={cfg.h}, d={d}")

    tau_prev = pacing_mod.initial_tau(T)
    W_prev = ModelParams(W=np.zeros((d, T)))
    lam = cfg.lambda0  # None -> pinned to the median score at iteration 1
    records: list[IterationRecord] = []
    objectives: list[float] = []
    substeps: list[tuple[float, float, float, float]] = []
    converged = False
    iterations = 0

    for k in range(1, cfg.max_outer_iters + 1):
        pen = anchored_penalty_for(theta, cfg.gamma, cfg.feature_eps)
        W_new = np.column_stack([solve_task(task, pen) for task in data])
        W = ModelParams(W=W_new)
        scores = np.array(
            [task_score(task, W.column(i), theta, cfg.gamma, eps=cfg.feature_eps)
             for i, task in enumerate(data)]
        )

        if lam is None:
            lam = pacing_mod.default_lambda0(scores)

        if pinned_tau is not None:
            tau_obj = None
            tau_vec = np.asarray(pinned_tau, dtype=float)
        elif spec.tau_rule is TauMode.HARD:
            tau_obj = pacing_mod.update_tau_hard(scores, lam, cfg.delta)
            tau_vec = tau_obj.tau
        else:
            tau_obj = pacing_mod.update_tau_entropy(scores, lam)
            tau_vec = tau_obj.tau

        theta_new = _update_theta(spec.variant, W, tau_vec, cfg)

        obj_lam = lam if spec.self_paced else 0.0
        obj_before_w = objective_value(
            data, W_prev, tau_prev, theta, cfg.gamma, obj_lam, spec.tau_rule, eps=cfg.feature_eps
        )
        obj_after_w = objective_value(
            data, W, tau_prev, theta, cfg.gamma, obj_lam, spec.tau_rule, eps=cfg.feature_eps
        )
        obj_after_tau = objective_value(
            data, W, tau_vec, theta, cfg.gamma, obj_lam, spec.tau_rule, eps=cfg.feature_eps
        )
        obj_after_theta = objective_value(
            data, W, tau_vec, theta_new, cfg.gamma, obj_lam, spec.tau_rule, eps=cfg.feature_eps
        )
        substeps.append((obj_before_w, obj_after_w, obj_after_tau, obj_after_theta))
        objectives.append(obj_after_theta)
        records.append(
            IterationRecord(iteration=k, lam=obj_lam, tau=tau_vec.copy(), scores=scores)
        )
        iterations = k

        if stop_on_params:
            w_delta = float(np.max(np.abs(W.W - W_prev.W)))
            t_delta = _theta_delta(theta_new, theta)
            stable = max(w_delta, t_delta) < cfg.epsilon
        else:
            stable = tau_obj is not None and pacing_mod.has_converged(
                tau_obj, tau_prev, cfg.epsilon
            )

        W_prev, theta, tau_prev = W, theta_new, tau_vec
        lam = min(lam * cfg.c, cfg.lambda_max)
        if stable:
            converged = True
            break

    return TrainReport(
        W=W_prev,
        theta=theta,
        tau_history=tuple(records),
        objective_history=tuple(objectives),
        iterations_run=iterations,
        converged=converged,
        substep_objectives=tuple(substeps),
    )


def fit_self_paced(
    data: MultitaskDataset,
    spec: AlgorithmSpec,
    forced_tau: np.ndarray | None = None,
) -> TrainReport:
    """Run the self-paced loop until the tau vector stabilizes.

    forced_tau is a diagnostic hook that pins the weights every iteration and
    disables the tau convergence test (the run then uses the full iteration
    budget); the equivalence tests use it to reduce the loop to the baseline.
    """
    if not spec.self_paced:
        raise ValueError("spec.self_paced must be true for fit_self_paced")
    return _alternate(data, spec, pinned_tau=forced_tau, stop_on_params=False)


def fit_baseline_mtl(data: MultitaskDataset, spec: AlgorithmSpec) -> TrainReport:
    """The fixed-weight baseline: the same alternation with tau pinned to ones,
    stopping when W and theta stabilize."""
    if spec.self_paced:
        raise ValueError("spec.self_paced must be false for fit_baseline_mtl")
    ones = np.ones(data.n_tasks)
    return _alternate(data, spec, pinned_tau=ones, stop_on_params=True)


def fit_itl(data: MultitaskDataset, gamma: float) -> ModelParams:
    """Independent ridge/logistic fit per task (no sharing)."""
    cols = []
    for task in data:
        pen = AnchoredPenalty(M=np.eye(task.d), m=np.zeros(task.d), gamma=gamma)
        cols.append(solve_task(task, pen))
    return ModelParams(W=np.column_stack(cols))


def fit_stl(data: MultitaskDataset, gamma: float) -> np.ndarray:
    """One pooled model over the concatenation of every task's examples."""
    kinds = {task.kind for task in data}
    if len(kinds) > 1:
        raise ValueError("cannot pool tasks of mixed kinds")
    X = np.vstack([task.X for task in data])
    y = np.concatenate([task.y for task in data])
    pooled = TaskDataset(task_id=0, X=X, y=y, kind=next(iter(kinds)))
    pen = AnchoredPenalty(M=np.eye(data.d), m=np.zeros(data.d), gamma=gamma)
    return solve_task(pooled, pen)


def fit_curriculum(data: MultitaskDataset, gamma: float) -> CurriculumResult:
    """Greedy task ordering: each step commits the remaining task whose
    anchored fit (to the previously committed parameters) scores lowest.

    Ties break toward the lowest task id.
    """
    remaining = sorted(range(data.n_tasks), key=lambda i: data.tasks[i].task_id)
    anchor = np.zeros(data.d)
    eye = np.eye(data.d)
    order: list[int] = []
    columns: dict[int, np.ndarray] = {}
    while remaining:
        best = None
        for i in remaining:
            task = data.tasks[i]
            pen = AnchoredPenalty(M=eye, m=anchor, gamma=gamma)
            w = solve_task(task, pen)
            value = task_average_loss(task, w) + pen.value(w)
            if best is None or value < best[0]:
                best = (value, i, w)
        _, chosen, w = best
        remaining.remove(chosen)
        order.append(data.tasks[chosen].task_id)
        columns[chosen] = w
        anchor = w
    W = np.column_stack([columns[i] for i in range(data.n_tasks)])
    return CurriculumResult(order=tuple(order), W=ModelParams(W=W))


def predict(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Linear predictions Xw (raw margins for classification)."""
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[1] != w.shape[0]:
        raise ValueError(f"X has {X.shape[1]} columns, w has length {w.shape[0]}")
    return X @ w


def predict_tasks(W: ModelParams, data: MultitaskDataset) -> list[np.ndarray]:
    """Per-task predictions, column t of W applied to task t."""
    if W.n_tasks != data.n_tasks:
        raise ValueError("W and dataset disagree on the number of tasks")
    return [predict(W.column(i), task.X) for i, task in enumerate(data)]
