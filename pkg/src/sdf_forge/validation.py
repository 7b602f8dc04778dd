"""Input validation helpers.

Small checks shared by the estimator, the CLI and the numeric modules; all
raise InputError so callers get consistent exit-code behaviour.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError


def as_float_array(x, name="array", ndim=None, shape=None):
    """Coerce to a C-contiguous float64 array and check dimensions."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"{name}: expected {ndim} dimensions, got {arr.ndim}")
    if shape is not None:
        for axis, want in enumerate(shape):
            if want is not None and arr.shape[axis] != want:
                raise InputError(
                    f"{name}: expected shape {shape}, got {arr.shape}"
                )
    return arr


def as_points(x, name="points"):
    """Validate an (n, 3) finite coordinate array."""
    arr = as_float_array(x, name, ndim=2, shape=(None, 3))
    check_finite(arr, name)
    return arr


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def require(cond, message):
    if not cond:
        raise InputError(message)


def check_positive(value, name):
    if not value > 0:
        raise InputError(f"{name} must be positive, got {value}")
    return value
