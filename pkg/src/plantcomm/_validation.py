"""Small input-validation helpers shared by the public modules."""

from __future__ import annotations

import math
from numbers import Real

import numpy as np


class DomainError(ValueError):
    """Raised when a model is evaluated outside the region where it is defined."""


def check_scalar(value, name, *, min_val=None, max_val=None, include_min=True, include_max=True):
    """Validate a finite real scalar and return it as ``float``."""
    if isinstance(value, bool) or not isinstance(value, (Real, np.floating, np.integer)):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if math.isnan(value):
        raise ValueError(f"{name} must not be NaN")
    if min_val is not None:
        if include_min and value < min_val:
            raise ValueError(f"{name} must be >= {min_val}, got {value}")
        if not include_min and value <= min_val:
            raise ValueError(f"{name} must be > {min_val}, got {value}")
    if max_val is not None:
        if include_max and value > max_val:
            raise ValueError(f"{name} must be <= {max_val}, got {value}")
        if not include_max and value >= max_val:
            raise ValueError(f"{name} must be < {max_val}, got {value}")
    return value


def check_1d(values, name, *, min_len=1, finite=True):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} values, got {arr.size}")
    if finite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_increasing(values, name, *, strict=True):
    arr = check_1d(values, name)
    diffs = np.diff(arr)
    if strict and np.any(diffs <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if not strict and np.any(diffs < 0):
        raise ValueError(f"{name} must be non-decreasing")
    return arr
