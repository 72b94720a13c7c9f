"""Input validation shared by the estimators and pipeline functions."""

import numpy as np
from sklearn.utils.validation import check_array

from .errors import LengthMismatch, ShapeMismatch


def check_trials(X):
    """Validate a raw trial stack shaped (n_trials, n_channels, n_samples)."""
    try:
        X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64,
                        ensure_min_samples=1)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (trials, channels, samples), got shape {X.shape}")
    if X.shape[1] < 2:
        raise ShapeMismatch("need at least 2 channels")
    if X.shape[2] < 2:
        raise ShapeMismatch("need at least 2 samples per trial")
    return X


def check_sequences(X, n_features=None, allow_empty=False):
    """Validate feature sequences shaped (n_items, n_steps, n_features).

    A single 2-D sequence is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] < 1 or (X.shape[0] < 1 and not allow_empty):
        raise ShapeMismatch(f"expected (items, steps, features), got shape {X.shape}")
    if n_features is not None and X.shape[2] != n_features:
        raise ShapeMismatch(f"expected {n_features} features per step, got {X.shape[2]}")
    if not np.all(np.isfinite(X)):
        raise ShapeMismatch("feature sequences contain non-finite values")
    return X


def check_labels(y, n_items):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeMismatch(f"labels must be 1-D, got shape {y.shape}")
    if y.shape[0] != n_items:
        raise LengthMismatch(f"{n_items} items but {y.shape[0]} labels")
    return y
