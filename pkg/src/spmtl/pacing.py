"""Self-paced selection machinery: both tau rules, the geometric threshold
schedule, entropy, and the convergence test of the outer loop."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import TaskWeights, TauMode


@dataclass(frozen=True)
class PacingState:
    """Threshold schedule state threaded through the outer loop."""

    lam: float
    iteration: int
    tau_prev: np.ndarray

    def __post_init__(self):
        tau_prev = np.array(self.tau_prev, dtype=float, copy=True)
        tau_prev.setflags(write=False)
        object.__setattr__(self, "tau_prev", tau_prev)


def initial_tau(n_tasks: int) -> np.ndarray:
    """tau^(0): uniform, so the first convergence test is well defined."""
    return np.full(n_tasks, 1.0 / n_tasks)


def default_lambda0(scores: np.ndarray) -> float:
    """Median of the first-iteration scores: the hard rule then admits about
    half the tasks."""
    med = float(np.median(scores))
    return med if med > 0 else 1.0


def update_tau_hard(scores: np.ndarray, lam: float, delta: float) -> TaskWeights:
    """Tasks scoring strictly below the threshold get weight 1, the rest delta."""
    scores = np.asarray(scores, dtype=float)
    return TaskWeights(tau=np.where(scores < lam, 1.0, delta), mode=TauMode.HARD)


def update_tau_entropy(scores: np.ndarray, lam: float) -> TaskWeights:
    """Softmax of -scores/lam: a probability distribution preferring easy tasks."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    scores = np.asarray(scores, dtype=float)
    z = -scores / lam
    z = z - z.max()
    # floor keeps weights strictly positive when exp underflows
    e = np.maximum(np.exp(z), 1e-300)
    return TaskWeights(tau=e / e.sum(), mode=TauMode.ENTROPY)


def entropy(tau: TaskWeights) -> float:
    """Shannon entropy of the task distribution; only defined in entropy mode."""
    if tau.mode is not TauMode.ENTROPY:
        raise ValueError("entropy is only defined for entropy-mode task weights")
    t = tau.tau
    return float(-(t @ np.log(t)))


def advance_lambda(state: PacingState, c: float) -> PacingState:
    """Relax the threshold geometrically and step the iteration counter."""
    return replace(state, lam=state.lam * c, iteration=state.iteration + 1)


def has_converged(tau_new: TaskWeights, tau_prev: np.ndarray, epsilon: float) -> bool:
    """True iff the squared distance between consecutive tau vectors is <= epsilon."""
    tau_prev = np.asarray(tau_prev, dtype=float)
    if tau_new.tau.shape != tau_prev.shape:
        raise ValueError(
            f"tau length mismatch: {tau_new.tau.shape[0]} vs {tau_prev.shape[0]}"
        )
    diff = tau_new.tau - tau_prev
    return float(diff @ diff) <= epsilon
