"""Knowledge penalty P_gamma(w, theta) and the weighted theta-step updates.

Each update minimizes sum_t tau_t * penalty(w_t, theta) over its own knowledge
family: the anchor vector (weighted mean), the unit-trace PSD feature matrix
(normalized PSD square root of the weighted covariance), or the orthonormal
row subspace (leading eigenvectors of the weighted covariance).
"""

from __future__ import annotations

import numpy as np

from .core import FeatureMatrix, MeanVector, ModelParams, SharedKnowledge, Subspace, TaskWeights
from .solvers import psd_sqrt, regularized_inverse, top_h_eigenvectors


def penalty(w: np.ndarray, theta: SharedKnowledge, gamma: float, eps: float = 1e-8) -> float:
    """Evaluate gamma-scaled closeness of w to the shared knowledge."""
    w = np.asarray(w, dtype=float)
    if isinstance(theta, MeanVector):
        if w.shape != theta.w0.shape:
            raise ValueError(f"w has shape {w.shape}, anchor has shape {theta.w0.shape}")
        r = w - theta.w0
        return float(gamma * (r @ r))
    if isinstance(theta, FeatureMatrix):
        if w.shape != (theta.d,):
            raise ValueError(f"w has shape {w.shape}, feature matrix is {theta.d}x{theta.d}")
        return float(gamma * (w @ regularized_inverse(theta, eps) @ w))
    if isinstance(theta, Subspace):
        if w.shape != (theta.d,):
            raise ValueError(f"w has shape {w.shape}, subspace lives in dimension {theta.d}")
        r = w - theta.U.T @ (theta.U @ w)
        return float(gamma * (r @ r))
    raise TypeError(f"unknown knowledge type {type(theta).__name__}")


def _weights(tau) -> np.ndarray:
    return tau.tau if isinstance(tau, TaskWeights) else np.asarray(tau, dtype=float)


def update_mean(W: ModelParams, tau, gamma: float) -> MeanVector:
    """Weighted mean of the task parameter columns.

    Reduces to the plain column mean under uniform weights. gamma scales the
    objective but not its minimizer; it is accepted for interface symmetry.
    """
    t = _weights(tau)
    total = float(t.sum())
    if total <= 0:
        raise ValueError("tau weights must have positive sum")
    return MeanVector(w0=W.W @ t / total)


def update_feature_matrix(W: ModelParams, tau, eps: float = 1e-8) -> FeatureMatrix:
    """Unit-trace PSD minimizer of the weighted inverse-metric penalty.

    D = sqrt(C) / trace(sqrt(C)) with C the tau-weighted parameter covariance;
    eps*I keeps C full rank so D stays invertible downstream.
    """
    t = _weights(tau)
    C = (W.W * t) @ W.W.T + eps * np.eye(W.d)
    S = psd_sqrt(C)
    tr = float(np.trace(S))
    if tr < 1e-12:
        raise ValueError("all weighted task parameters are ~0; feature matrix undefined")
    D = S / tr
    # exact unit trace despite roundoff
    D = D / float(np.trace(D))
    return FeatureMatrix(D=D)


def update_subspace(W: ModelParams, tau, h: int) -> Subspace:
    """Orthonormal basis of the h dominant directions of the weighted covariance."""
    t = _weights(tau)
    C = (W.W * t) @ W.W.T
    return Subspace(U=top_h_eigenvectors(C, h))
