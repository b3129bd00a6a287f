"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


class TruncationWarning(UserWarning):
    """Probability mass was lost to the photon-number cutoff."""


class TruncationError(ValueError):
    """A requested photon number lies above the truncation."""


class UndefinedEstimateError(ArithmeticError):
    """A ratio estimator has a vanishing denominator."""


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name} must be <= {maximum}, got {value}")
    return value


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        bracket = "(" if low_open else "["
        raise ValueError(f"{name}={value} outside {bracket}{low}, ...")
    if high is not None and (value > high or (high_open and value == high)):
        bracket = ")" if high_open else "]"
        raise ValueError(f"{name}={value} outside ..., {high}{bracket}")
    return value


def check_probability_vector(probs, name="probs", atol=1e-12):
    """Return ``probs`` as a 1-D float array with entries in [0, 1] and total <= 1."""
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if arr.min() < -atol or arr.max() > 1 + atol:
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if arr.sum() > 1 + 1e-12 * arr.size:
        raise ValueError(f"{name} sums to {arr.sum():.15g} > 1")
    return np.clip(arr, 0.0, 1.0)


def check_statistics_rows(X, estimator=None):
    """2-D array of photon statistics, one distribution per row."""
    X = check_array(X, dtype=np.float64, estimator=estimator)
    if X.min() < -1e-12 or np.any(X.sum(axis=1) > 1 + 1e-9):
        raise ValueError("each row must be a sub-normalized probability vector")
    return X
