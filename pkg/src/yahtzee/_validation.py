"""Input checks shared by the estimators and module functions."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import DomainError, EmptyDrawsError


def check_turnout(p, name="turnout"):
    if not isinstance(p, numbers.Real) or not 0.0 < float(p) < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {p!r}")
    return float(p)


def check_group_size(g):
    if not isinstance(g, numbers.Integral) or g < 2:
        raise ValueError(f"group size must be an integer >= 2, got {g!r}")
    return int(g)


def check_draws(X, g, ensure_2d=True):
    """Validate a draw matrix: integers in ``[0, g]``, at least one column.

    A 1-d input is treated as a single record when ``ensure_2d`` is False.
    """
    arr = np.asarray(X)
    if arr.size == 0:
        raise EmptyDrawsError("no draws supplied")
    if arr.ndim == 1 and not ensure_2d:
        arr = arr.reshape(1, -1)
    arr = check_array(arr, dtype=None, ensure_all_finite=True, ensure_min_features=1)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise DomainError("draws must be integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.min() < 0 or arr.max() > g:
        raise DomainError(f"draws must lie in [0, {g}], got range [{arr.min()}, {arr.max()}]")
    return arr
