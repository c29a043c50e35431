"""Synthetic dataset generators and CSV ingestion with per-task splitting.

Both generators are deterministic functions of their seed. The group-structured
generator (syn1) draws task parameters as a shared mean plus a random
combination of a per-group low-rank basis, then corrupts a random subset of
tasks with high observation noise; the nested-support generator (syn2) gives
task t the first t entries of one shared coefficient vector, so later tasks
are strictly harder to learn from the same number of examples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import MultitaskDataset, TaskDataset, TaskKind, normalize_labels

# Internal scales of the group-structured generator: a strong shared mean plus
# rank-GROUP_RANK within-group variation keeps the easy tasks learnable from 15
# examples while the high-noise tasks depend on the shared structure.
GROUP_RANK = 4
MEAN_SCALE = 10.0
COEF_SCALE = 5.0
SYN2_NOISE = 1.0


@dataclass(frozen=True)
class SynConfig:
    """Shape and noise knobs of the synthetic generators."""

    seed: int
    n_tasks: int = 30
    n_per_task: int = 15
    d: int = 20
    n_groups: int = 3
    sigma_easy: float = 5.0
    sigma_hard: float = 25.0
    hard_fraction: float = 1.0 / 3.0

    def __post_init__(self):
        if self.n_tasks < 1 or self.n_per_task < 1 or self.d < 1:
            raise ValueError("n_tasks, n_per_task, and d must be positive")
        if self.n_groups < 1:
            raise ValueError("n_groups must be positive")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise ValueError("hard_fraction must lie in [0, 1]")

    @classmethod
    def syn1(cls, seed: int, **overrides) -> "SynConfig":
        return cls(seed=seed, **{"n_tasks": 30, "n_per_task": 15, "d": 20, **overrides})

    @classmethod
    def syn2(cls, seed: int, **overrides) -> "SynConfig":
        return cls(seed=seed, **{"n_tasks": 30, "n_per_task": 15, "d": 30, **overrides})


def _syn1_latents(cfg: SynConfig, rng: np.random.Generator):
    """Draw (true parameter matrix, hard-task mask) from the stream prefix."""
    mean = MEAN_SCALE * rng.standard_normal(cfg.d)
    bases = []
    for _ in range(cfg.n_groups):
        G = rng.standard_normal((cfg.d, GROUP_RANK))
        Q, _ = np.linalg.qr(G)
        bases.append(Q)
    W = np.empty((cfg.d, cfg.n_tasks))
    for t in range(cfg.n_tasks):
        g = t * cfg.n_groups // cfg.n_tasks
        coef = COEF_SCALE * rng.standard_normal(GROUP_RANK)
        W[:, t] = mean + bases[g] @ coef
    n_hard = int(round(cfg.hard_fraction * cfg.n_tasks))
    hard_ids = rng.choice(cfg.n_tasks, size=n_hard, replace=False)
    hard = np.zeros(cfg.n_tasks, dtype=bool)
    hard[hard_ids] = True
    return W, hard


def syn1_latents(cfg: SynConfig) -> tuple[np.ndarray, np.ndarray]:
    """True d x T parameters and the boolean high-noise mask, as generated."""
    return _syn1_latents(cfg, np.random.default_rng(cfg.seed))


def generate_syn1(cfg: SynConfig) -> MultitaskDataset:
    """Group-structured regression tasks with an easy/hard noise split."""
    rng = np.random.default_rng(cfg.seed)
    W, hard = _syn1_latents(cfg, rng)
    tasks = []
    for t in range(cfg.n_tasks):
        X = rng.standard_normal((cfg.n_per_task, cfg.d))
        sigma = cfg.sigma_hard if hard[t] else cfg.sigma_easy
        y = X @ W[:, t] + sigma * rng.standard_normal(cfg.n_per_task)
        tasks.append(TaskDataset(task_id=t, X=X, y=y, kind=TaskKind.REGRESSION))
    return MultitaskDataset.of(tasks)


def _syn2_latents(cfg: SynConfig, rng: np.random.Generator) -> np.ndarray:
    s = rng.standard_normal(cfg.d)
    W = np.zeros((cfg.d, cfg.n_tasks))
    for t in range(cfg.n_tasks):
        W[: t + 1, t] = s[: t + 1]
    return W


def syn2_latents(cfg: SynConfig) -> np.ndarray:
    """True d x T parameters: column t holds the first t+1 shared coefficients."""
    return _syn2_latents(cfg, np.random.default_rng(cfg.seed))


def generate_syn2(cfg: SynConfig) -> MultitaskDataset:
    """Nested-support regression tasks: task t uses the first t+1 features."""
    if cfg.d != cfg.n_tasks:
        raise ValueError(f"nested-support generator needs d == n_tasks, got {cfg.d} != {cfg.n_tasks}")
    rng = np.random.default_rng(cfg.seed)
    W = _syn2_latents(cfg, rng)
    tasks = []
    for t in range(cfg.n_tasks):
        X = rng.standard_normal((cfg.n_per_task, cfg.d))
        y = X @ W[:, t] + SYN2_NOISE * rng.standard_normal(cfg.n_per_task)
        tasks.append(TaskDataset(task_id=t, X=X, y=y, kind=TaskKind.REGRESSION))
    return MultitaskDataset.of(tasks)


@dataclass(frozen=True)
class CsvSchema:
    """How to interpret a CSV file: which columns are the task key, the target,
    and the categorical features; everything else is numeric."""

    task_column: str
    target_column: str
    kind: TaskKind = TaskKind.REGRESSION
    categorical_columns: tuple[str, ...] = ()
    add_bias: bool = False


class CsvFormatError(ValueError):
    pass


def load_csv_dataset(path, schema: CsvSchema) -> MultitaskDataset:
    """Parse a UTF-8 comma-delimited file with a header row into tasks.

    Categorical columns expand in place into one indicator column per value
    (ordered by first occurrence); a constant-1 bias column is appended when
    requested. Rows group into tasks by the task column, ordered by first
    occurrence.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected a header row")
        rows = list(reader)

    declared = {schema.task_column, schema.target_column, *schema.categorical_columns}
    missing = declared - set(header)
    if missing:
        raise CsvFormatError(f"{path}: schema columns {sorted(missing)} not in header {header}")

    col_index = {name: i for i, name in enumerate(header)}
    feature_cols = [
        name for name in header
        if name not in (schema.task_column, schema.target_column)
    ]
    categorical = set(schema.categorical_columns)

    # first-occurrence level dictionaries per categorical column
    levels: dict[str, list[str]] = {name: [] for name in categorical}
    for line_no, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
            )
        for name in feature_cols:
            if name in categorical:
                value = row[col_index[name]]
                if value not in levels[name]:
                    levels[name].append(value)

    def parse_number(value: str, line_no: int, name: str) -> float:
        try:
            return float(value)
        except ValueError:
            raise CsvFormatError(
                f"{path}:{line_no}: column {name!r} has non-numeric value {value!r}"
            ) from None

    by_task: dict[str, list[tuple[np.ndarray, float]]] = {}
    task_order: list[str] = []
    for line_no, row in enumerate(rows, start=2):
        features: list[float] = []
        for name in feature_cols:
            value = row[col_index[name]]
            if name in categorical:
                indicator = [0.0] * len(levels[name])
                indicator[levels[name].index(value)] = 1.0
                features.extend(indicator)
            else:
                features.append(parse_number(value, line_no, name))
        if schema.add_bias:
            features.append(1.0)
        target = parse_number(row[col_index[schema.target_column]], line_no, schema.target_column)
        key = row[col_index[schema.task_column]]
        if key not in by_task:
            by_task[key] = []
            task_order.append(key)
        by_task[key].append((np.array(features), target))

    if not task_order:
        raise CsvFormatError(f"{path}: no data rows")

    try:
        ids = {key: int(key) for key in task_order}
    except ValueError:
        ids = {key: i for i, key in enumerate(task_order)}

    tasks = []
    for key in task_order:
        X = np.vstack([f for f, _ in by_task[key]])
        y = np.array([t for _, t in by_task[key]])
        if schema.kind is TaskKind.BINARY_CLASSIFICATION:
            y = normalize_labels(y)
        tasks.append(TaskDataset(task_id=ids[key], X=X, y=y, kind=schema.kind))
    return MultitaskDataset.of(tasks)


@dataclass(frozen=True)
class SplitSpec:
    """Per-task train/test splitting, repeated with independent seeds."""

    seed: int
    train_fraction: float | None = None
    train_count: int | None = None
    stratified: bool = False
    n_repeats: int = 1

    def __post_init__(self):
        if (self.train_fraction is None) == (self.train_count is None):
            raise ValueError("set exactly one of train_fraction / train_count")
        if self.train_fraction is not None and not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.train_count is not None and self.train_count < 1:
            raise ValueError("train_count must be positive")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be positive")


def _train_size(spec: SplitSpec, n: int, task_id: int) -> int:
    if spec.train_count is not None:
        if spec.train_count >= n:
            raise ValueError(
                f"task {task_id}: train_count={spec.train_count} leaves no test data "
                f"(task has {n} examples)"
            )
        return spec.train_count
    return min(max(int(round(spec.train_fraction * n)), 1), n - 1)


def _stratified_indices(task: TaskDataset, n_train: int, rng: np.random.Generator) -> np.ndarray:
    labels = task.y
    classes = np.unique(labels)
    # largest-remainder allocation keeps per-class ratios within one example
    quotas = {c: n_train * np.sum(labels == c) / len(labels) for c in classes}
    counts = {c: int(np.floor(q)) for c, q in quotas.items()}
    short = n_train - sum(counts.values())
    for c in sorted(classes, key=lambda c: (-(quotas[c] - counts[c]), c)):
        if short == 0:
            break
        counts[c] += 1
        short -= 1
    picked = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        picked.append(idx[: counts[c]])
    return np.sort(np.concatenate(picked))


def split(data: MultitaskDataset, spec: SplitSpec) -> list[tuple[MultitaskDataset, MultitaskDataset]]:
    """n_repeats independent per-task train/test splits."""
    for task in data:
        if task.n_examples < 2:
            raise ValueError(f"task {task.task_id} has fewer than 2 examples")
        if spec.stratified and task.kind is not TaskKind.BINARY_CLASSIFICATION:
            raise ValueError("stratified splitting requires classification tasks")
    out = []
    root = np.random.SeedSequence(spec.seed)
    for r, child in enumerate(root.spawn(spec.n_repeats)):
        rng = np.random.default_rng(child)
        train_tasks, test_tasks = [], []
        for task in data:
            n = task.n_examples
            n_train = _train_size(spec, n, task.task_id)
            if spec.stratified:
                train_idx = _stratified_indices(task, n_train, rng)
            else:
                perm = rng.permutation(n)
                train_idx = np.sort(perm[:n_train])
            mask = np.zeros(n, dtype=bool)
            mask[train_idx] = True
            train_tasks.append(
                TaskDataset(task_id=task.task_id, X=task.X[mask], y=task.y[mask], kind=task.kind)
            )
            test_tasks.append(
                TaskDataset(task_id=task.task_id, X=task.X[~mask], y=task.y[~mask], kind=task.kind)
            )
        out.append((MultitaskDataset.of(train_tasks), MultitaskDataset.of(test_tasks)))
    return out


def kfold(data: MultitaskDataset, k: int, seed: int) -> list[tuple[MultitaskDataset, MultitaskDataset]]:
    """Per-task k-fold partition into (train, validation) pairs."""
    if k < 2:
        raise ValueError("k must be at least 2")
    for task in data:
        if task.n_examples < k:
            raise ValueError(f"task {task.task_id} has {task.n_examples} examples, fewer than k={k}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    fold_assignments = {
        task.task_id: np.array_split(rng.permutation(task.n_examples), k) for task in data
    }
    folds = []
    for i in range(k):
        train_tasks, val_tasks = [], []
        for task in data:
            val_idx = np.sort(fold_assignments[task.task_id][i])
            mask = np.zeros(task.n_examples, dtype=bool)
            mask[val_idx] = True
            train_tasks.append(
                TaskDataset(task_id=task.task_id, X=task.X[~mask], y=task.y[~mask], kind=task.kind)
            )
            val_tasks.append(
                TaskDataset(task_id=task.task_id, X=task.X[mask], y=task.y[mask], kind=task.kind)
            )
        folds.append((MultitaskDataset.of(train_tasks), MultitaskDataset.of(val_tasks)))
    return folds
