"""Shared estimator plumbing: input validation and standardization."""

from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    """predict was called before fit."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}")
        self.epoch = epoch


def as_feature_matrix(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected 2-D feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"expected {n_features} features, got {X.shape[1]} "
            "(input modality may not match this model)"
        )
    return X


def as_tensor_batch(X, shape: tuple[int, ...] | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ValueError(
            f"expected (n, channels, h, w) tensor batch, got shape {X.shape} "
            "(input modality may not match this model)"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("tensor batch contains non-finite values")
    if shape is not None and X.shape[1:] != shape:
        raise ValueError(f"expected per-sample shape {shape}, got {X.shape[1:]}")
    return X


def as_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != n:
        raise ValueError(f"got {n} inputs but {len(y)} targets")
    if n < 2:
        raise ValueError("need at least 2 training samples")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    return y


class Standardizer:
    """Per-feature z-score using training statistics."""

    def fit(self, X: np.ndarray) -> "Standardizer":
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean_) / self.scale_
