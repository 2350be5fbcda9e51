"""Ordinary least squares with a vanishing ridge term on the weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, InsufficientDataError, SoilFusionError

RIDGE = 1e-8


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[0])


def fit_linear(X, y, ridge: float = RIDGE) -> LinearModel:
    """Minimise ||y - Xw - b||^2 + ridge * ||w||^2 (intercept unpenalised).

    The intercept is removed by centring; the penalised problem is solved as
    an augmented least-squares system, which stays well behaved on collinear
    spectra.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise InsufficientDataError(f"need a non-empty 2-D feature matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"target shape {y.shape} does not match {X.shape[0]} rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise SoilFusionError("non-finite entry in training data")

    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    d = X.shape[1]
    A = np.vstack([X - x_mean, np.sqrt(ridge) * np.eye(d)])
    b = np.concatenate([y - y_mean, np.zeros(d)])
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    return LinearModel(weights=w, intercept=float(y_mean - x_mean @ w))


def predict_linear(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise DimensionError(
            f"model expects {model.n_features} features, got {X.shape[1]}"
        )
    return X @ model.weights + model.intercept
