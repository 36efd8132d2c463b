"""Input validation helpers used by the estimators and public functions."""

import numpy as np

from .exceptions import DegenerateTimes, LengthMismatch


def check_times(times, min_len=2, strict=True, name="times"):
    """Return `times` as a 1-D float array, checking order and finiteness."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {t.shape}")
    if t.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} samples, got {t.size}")
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite values")
    if t.size > 1:
        d = np.diff(t)
        if strict and np.any(d <= 0):
            raise DegenerateTimes(f"{name} must be strictly increasing")
        if not strict and np.any(d < 0):
            raise DegenerateTimes(f"{name} must be nondecreasing")
    return t


def check_signal(values, n, name="values"):
    y = np.asarray(values, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    if y.size != n:
        raise LengthMismatch(f"{name} has length {y.size}, expected {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def check_positive(value, name, allow_zero=False):
    v = float(value)
    if not np.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value!r}")
    return v


def check_span(span):
    s = float(span)
    if not 0.0 < s <= 1.0:
        raise ValueError(f"span must lie in (0, 1], got {span!r}")
    return s


def check_trace_array(X):
    """Coerce estimator input to an ``(n, 3)`` array of ``t, v1, v2``.

    Accepts a :class:`~mlcouple.sim.VoltageTrace` or any array-like whose
    first three columns are time and the two voltages.
    """
    if hasattr(X, "times") and hasattr(X, "v1"):
        return np.column_stack([X.times, X.v1, X.v2])
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 3:
        raise ValueError(
            f"expected a trace with columns t, v1, v2; got shape {arr.shape}")
    arr = arr[:, :3]
    check_times(arr[:, 0], min_len=3)
    if not np.all(np.isfinite(arr)):
        raise ValueError("trace contains non-finite values")
    return arr
