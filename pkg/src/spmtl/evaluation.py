"""Metrics, hyperparameter cross-validation, and multi-run aggregation."""

from __future__ import annotations

import dataclasses
import enum
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ModelParams, MultitaskDataset, PacingConfig, TaskKind
from .data import kfold
from .trainer import AlgorithmSpec, fit_baseline_mtl, fit_self_paced, predict

logger = logging.getLogger(__name__)


class Metric(enum.Enum):
    RMSE = "rmse"
    AUC = "auc"


def metric_for(data: MultitaskDataset) -> Metric:
    kind = data.tasks[0].kind
    return Metric.RMSE if kind is TaskKind.REGRESSION else Metric.AUC


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size < 1:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Exact Mann-Whitney statistic: P(score+ > score-) + 0.5 P(tie)."""
    labels = np.asarray(labels, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape:
        raise ValueError(f"shape mismatch: {labels.shape} vs {scores.shape}")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = stats.rankdata(scores)  # average ranks handle ties exactly
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate_model(model, data: MultitaskDataset, metric: Metric) -> np.ndarray:
    """Per-task metric of a fitted model: a ModelParams (column per task) or a
    single shared weight vector."""
    values = []
    for i, task in enumerate(data):
        w = model.column(i) if isinstance(model, ModelParams) else np.asarray(model)
        pred = predict(w, task.X)
        if metric is Metric.RMSE:
            values.append(rmse(task.y, pred))
        else:
            values.append(auc(task.y, pred))
    return np.array(values)


@dataclass(frozen=True)
class RunSummary:
    """Table-style aggregate: per-task means plus the over-runs mean and its
    standard error."""

    per_task_metric: np.ndarray
    mean: float
    std_error: float
    metric: Metric
    n_runs: int


def aggregate_runs(per_run_metrics, metric: Metric = Metric.RMSE) -> RunSummary:
    """Aggregate per-task metric vectors from repeated runs."""
    if len(per_run_metrics) == 0:
        raise ValueError("need at least one run")
    mat = np.vstack([np.asarray(v, dtype=float) for v in per_run_metrics])
    run_means = mat.mean(axis=1)
    n = mat.shape[0]
    std_error = float(run_means.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return RunSummary(
        per_task_metric=mat.mean(axis=0),
        mean=float(run_means.mean()),
        std_error=std_error,
        metric=metric,
        n_runs=n,
    )


def paired_t_pvalue(a, b) -> float:
    """Two-sided paired t-test p-value on run-level means."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 1.0 if np.allclose(d, 0) else 0.0
    t = d.mean() / (sd / math.sqrt(d.size))
    return float(2.0 * stats.t.sf(abs(t), df=d.size - 1))


_SPEC_PARAMS = {"tau_rule"}


def apply_params(spec: AlgorithmSpec, params: dict) -> AlgorithmSpec:
    """Return spec with the named pacing/spec parameters replaced."""
    pacing_fields = {f.name for f in dataclasses.fields(PacingConfig)}
    unknown = set(params) - pacing_fields - _SPEC_PARAMS
    if unknown:
        raise ValueError(f"unknown hyperparameters {sorted(unknown)}")
    pacing_updates = {k: v for k, v in params.items() if k in pacing_fields}
    spec_updates = {k: v for k, v in params.items() if k in _SPEC_PARAMS}
    new_pacing = dataclasses.replace(spec.pacing, **pacing_updates) if pacing_updates else spec.pacing
    return dataclasses.replace(spec, pacing=new_pacing, **spec_updates)


def _fit_for(spec: AlgorithmSpec):
    return fit_self_paced if spec.self_paced else fit_baseline_mtl


def cv_mean_metric(fit_fn, folds, metric: Metric) -> float:
    """Mean validation metric of one candidate across folds; fit_fn maps a
    training dataset to a fitted model."""
    fold_means = []
    for train, val in folds:
        model = fit_fn(train)
        fold_means.append(float(evaluate_model(model, val, metric).mean()))
    return float(np.mean(fold_means))


def select_by_cv(candidates, folds, metric: Metric):
    """Pick the candidate (label, fit_fn) with the best mean validation metric.

    RMSE is minimized, AUC maximized; ties keep the earliest candidate; a
    candidate that fails on any fold is dropped with a warning.
    """
    best_label, best_value = None, None
    sign = 1.0 if metric is Metric.RMSE else -1.0
    for label, fit_fn in candidates:
        try:
            value = sign * cv_mean_metric(fit_fn, folds, metric)
        except Exception as exc:  # noqa: BLE001 - candidate-level isolation
            logger.warning("grid point %s failed during CV: %s", label, exc)
            continue
        if best_value is None or value < best_value:
            best_label, best_value = label, value
    if best_label is None:
        raise RuntimeError("every grid point failed cross-validation")
    return best_label


def cross_validate(
    data: MultitaskDataset,
    spec: AlgorithmSpec,
    grid: dict,
    k: int,
    seed: int,
) -> AlgorithmSpec:
    """Grid-search spec hyperparameters by per-task k-fold cross validation."""
    if not grid:
        raise ValueError("grid must be non-empty")
    folds = kfold(data, k, seed)
    metric = metric_for(data)
    keys = list(grid.keys())
    candidates = []
    params_by_label = {}
    for combo in itertools.product(*(grid[k_] for k_ in keys)):
        params = dict(zip(keys, combo))
        label = tuple(params.items())
        params_by_label[label] = params
        candidate = apply_params(spec, params)
        fit = _fit_for(candidate)
        candidates.append((label, lambda train, c=candidate, f=fit: f(train, c).W))

    best_label = select_by_cv(candidates, folds, metric)
    return apply_params(spec, params_by_label[best_label])
