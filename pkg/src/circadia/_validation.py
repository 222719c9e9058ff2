"""Argument checks shared by the estimator classes and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .exceptions import InputError, ParameterError
from .twostage import METHODS


def check_times(X) -> np.ndarray:
    """Accept times as a 1-d array or a single-column 2-d array."""
    arr = check_array(X, ensure_2d=False, dtype=float, input_name="X")
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise InputError(f"X must hold a single column of times, got shape {arr.shape}")
        arr = arr[:, 0]
    return arr


def check_times_values(X, y):
    t = check_times(X)
    v = check_array(y, ensure_2d=False, dtype=float, input_name="y")
    if v.ndim != 1:
        raise InputError("y must be one-dimensional")
    check_consistent_length(t, v)
    return t, v


def check_groups(groups, n) -> np.ndarray:
    if groups is None:
        raise InputError("groups (subject labels) are required for two-stage fitting")
    g = np.asarray(groups)
    if g.ndim != 1 or g.size != n:
        raise InputError(f"groups must be 1-d with {n} entries")
    return g


def check_order(order) -> int:
    try:
        k = int(order)
    except (TypeError, ValueError):
        raise ParameterError(f"order must be an integer, got {order!r}") from None
    if k != order or k < 0:
        raise ParameterError(f"order must be a non-negative integer, got {order!r}")
    return k


def check_method(method) -> str:
    m = str(method).lower()
    if m not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    return m
