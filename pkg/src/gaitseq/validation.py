"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import DegenerateDataset


def check_cycles(X, n_channels=9, length=200, name="X"):
    """Validate a stack of cycles shaped (n_samples, n_channels, length).

    A single 2-D cycle is promoted to a stack of one. ``None`` skips the
    corresponding shape check.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"{name} must have shape (n_samples, n_channels, length), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if n_channels is not None and X.shape[1] != n_channels:
        raise ValueError(f"{name} has {X.shape[1]} channels, expected {n_channels}")
    if length is not None and X.shape[2] != length:
        raise ValueError(f"{name} has length {X.shape[2]}, expected {length}")
    check_array(X.reshape(X.shape[0], -1), ensure_all_finite=True, input_name=name)
    return X


def check_binary_labels(y, n_samples=None):
    """Integer labels in {0, 1} with both classes present."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("y must be 1-D")
    if n_samples is not None and y.shape[0] != n_samples:
        raise ValueError(f"y has {y.shape[0]} entries for {n_samples} samples")
    y = y.astype(int)
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 (normal) or 1 (anomalous)")
    if np.unique(y).size < 2:
        raise DegenerateDataset("training data must contain both classes")
    return y
