"""Shared starting points for the mode-finding and variational engines.

Restarts begin from a k-means-style partition of the standardized (response,
kernel-design) features, optionally jittered by random reassignment, with
stick coefficients started at zero.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve

from .model import Dataset, MixtureParams, ModelConfig

_SIGMA2_FLOOR = 1e-2


def kmeans_labels(features: np.ndarray, k: int, rng: np.random.Generator,
                  n_iter: int = 30) -> np.ndarray:
    """Plain Lloyd iterations with random-unit seeding; deterministic per rng."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n = features.shape[0]
    if k == 1 or n <= k:
        return np.arange(n) % k
    centers = features[rng.choice(n, size=k, replace=False)]
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        d2 = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        for h in range(k):
            mask = labels == h
            if mask.any():
                centers[h] = features[mask].mean(axis=0)
            else:
                centers[h] = features[int(np.argmax(d2.min(axis=1)))]
    return labels


def partition_features(data: Dataset) -> np.ndarray:
    """Standardized clustering features: model response plus non-constant designs."""
    cols = [data.model_y]
    for j in range(data.Lambda.shape[1]):
        col = data.Lambda[:, j]
        if np.std(col) > 0:
            cols.append(col)
    feats = np.column_stack(cols)
    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd[sd == 0] = 1.0
    return (feats - mu) / sd


def initial_params(data: Dataset, config: ModelConfig, rng: np.random.Generator,
                   jitter: float = 0.0) -> MixtureParams:
    """Parameter point from a (jittered) k-means partition; alpha starts at zero.

    ``jitter`` is the probability of reassigning each unit to a uniformly
    random component, which is what distinguishes the restarts.
    """
    H, P, R = config.H, config.P, config.R
    y = data.model_y
    labels = kmeans_labels(partition_features(data), H, rng)
    if jitter > 0:
        flip = rng.random(data.n) < jitter
        labels = np.where(flip, rng.integers(0, H, size=data.n), labels)

    beta = np.tile(config.mu_beta, (H, 1)).astype(float)
    sigma2 = np.full(H, max(float(np.var(y)), _SIGMA2_FLOOR))
    for h in range(H):
        mask = labels == h
        if mask.sum() >= 2:
            L = data.Lambda[mask]
            beta[h] = solve(L.T @ L + 1e-3 * np.eye(P), L.T @ y[mask], assume_a="pos")
            resid = y[mask] - L @ beta[h]
            sigma2[h] = max(float(np.mean(resid ** 2)), _SIGMA2_FLOOR)
    return MixtureParams(alpha=np.zeros((H - 1, R)), beta=beta, sigma2=sigma2)
