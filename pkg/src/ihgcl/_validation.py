"""Input checks shared by the estimator front-end."""
from __future__ import annotations

import numpy as np


def check_pairs(X, n_users: int | None = None, n_items: int | None = None) -> np.ndarray:
    """Return ``X`` as an ``(n, 2)`` int64 array of (user, item) indices."""
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of (user, item) pairs, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise ValueError("user and item indices must be integers")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise ValueError("negative index in pairs")
    if n_users is not None and arr.size and arr[:, 0].max() >= n_users:
        raise ValueError(f"user index {arr[:, 0].max()} out of range for {n_users} users")
    if n_items is not None and arr.size and arr[:, 1].max() >= n_items:
        raise ValueError(f"item index {arr[:, 1].max()} out of range for {n_items} items")
    return arr


def check_indices(idx, upper: int, what: str = "index") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(idx)).astype(np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= upper):
        raise ValueError(f"{what} out of range [0, {upper})")
    return arr


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
