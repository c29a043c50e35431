"""Self-paced multitask learning.

Alternating minimization over per-task parameters, task selection weights,
and shared knowledge (a mean vector, a feature metric, or a low-rank
subspace), with single-task / independent / curriculum baselines and
reproducible synthetic experiments.
"""

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
    logistic_loss,
    normalize_labels,
    squared_loss,
    task_average_loss,
    task_score,
)
from .data import (
    CsvSchema,
    SplitSpec,
    SynConfig,
    generate_syn1,
    generate_syn2,
    kfold,
    load_csv_dataset,
    split,
    syn1_latents,
    syn2_latents,
)
from .evaluation import (
    Metric,
    RunSummary,
    aggregate_runs,
    auc,
    cross_validate,
    paired_t_pvalue,
    rmse,
)
from .knowledge import penalty, update_feature_matrix, update_mean, update_subspace
from .pacing import (
    PacingState,
    advance_lambda,
    entropy,
    has_converged,
    initial_tau,
    update_tau_entropy,
    update_tau_hard,
)
from .solvers import (
    AnchoredPenalty,
    ConvergenceError,
    psd_sqrt,
    regularized_inverse,
    solve_penalized_least_squares,
    solve_penalized_logistic,
    top_h_eigenvectors,
)
from .trainer import (
    AlgorithmSpec,
    CurriculumResult,
    Variant,
    fit_baseline_mtl,
    fit_curriculum,
    fit_itl,
    fit_self_paced,
    fit_stl,
    objective_value,
    predict,
    predict_tasks,
)

__version__ = "0.1.0"
