"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d


def check_segments(X, n_segments, name="X"):
    """Segment indices from an ``(n,)`` or ``(n, 1)`` integer array."""
    X = check_array(X, ensure_2d=False, dtype=None, ensure_min_samples=0)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must hold one segment index per row, got {X.shape[1]} columns")
        X = X[:, 0]
    if X.size and not np.all(np.equal(np.mod(X, 1), 0)):
        raise ValueError(f"{name} must contain integer segment indices")
    X = X.astype(int)
    if X.size and (X.min() < 0 or X.max() >= n_segments):
        raise ValueError(f"{name} has segment indices outside [0, {n_segments})")
    return X


def check_targets(y, n):
    y = column_or_1d(check_array(y, ensure_2d=False, ensure_min_samples=0), warn=False)
    if y.shape[0] != n:
        raise ValueError(f"{n} segments but {y.shape[0]} targets")
    return y.astype(float)


def check_groups(groups, n):
    if groups is None:
        return np.zeros(n, dtype=int)
    groups = column_or_1d(np.asarray(groups), warn=False)
    if groups.shape[0] != n:
        raise ValueError(f"{n} samples but {groups.shape[0]} group labels")
    return groups


def check_coords(coords):
    coords = check_array(coords, ensure_2d=False)
    return coords[:, None] if coords.ndim == 1 else coords


def check_square_distances(d):
    d = check_array(d, ensure_all_finite=False)
    if d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got {d.shape}")
    return d
