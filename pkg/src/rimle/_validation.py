"""Input validation helpers shared by the public API."""

import numbers

import numpy as np
from sklearn.utils import check_array


def as_data_array(X, *, copy=False):
    """Return ``X`` (array-like or DataMatrix) as a finite float64 array of shape (n, p)."""
    values = getattr(X, "values", X)
    return check_array(values, dtype=np.float64, ensure_2d=True, copy=copy,
                       ensure_all_finite=True)


def as_points(x, p):
    """Coerce a single point or a stack of points; returns (array (n, p), was_single)."""
    arr = np.asarray(getattr(x, "values", x), dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != p:
        raise ValueError(f"expected points of dimension {p}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr, single


def check_scalar(value, name, *, lower=None, upper=None, lower_inclusive=True,
                 upper_inclusive=True, integer=False):
    """Validate a scalar hyper-parameter and return it as float or int."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}, "
                        f"got {value!r}")
    if not integer and not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if lower is not None:
        if value < lower or (value == lower and not lower_inclusive):
            raise ValueError(f"{name}={value!r} is out of range (lower bound {lower})")
    if upper is not None:
        if value > upper or (value == upper and not upper_inclusive):
            raise ValueError(f"{name}={value!r} is out of range (upper bound {upper})")
    return int(value) if integer else float(value)


def check_labels(labels, name="labels"):
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr
