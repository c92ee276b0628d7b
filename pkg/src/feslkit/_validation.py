"""Input validation helpers shared by the public entry points."""

import numpy as np


class DesignBoundsError(ValueError):
    """Raised when a design lies outside its box bounds."""


def check_vector(x, name="x", size=None):
    """Return ``x`` as a 1-D float array, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_square(a, name="matrix", size=None):
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must be {size}x{size}, got {arr.shape}")
    return arr


def check_symmetric(a, name="matrix", rtol=1e-12):
    a = check_square(a, name)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    if np.abs(a - a.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    return a


def check_design(x, lower, upper, tol=0.0):
    """Validate ``x`` against ``[lower, upper]`` and return it as an array.

    ``tol`` is an absolute slack used for designs produced by a solver
    that may sit on a bound up to round-off.
    """
    lower = check_vector(lower, "lower")
    upper = check_vector(upper, "upper", lower.size)
    x = check_vector(x, "x", lower.size)
    bad = (x < lower - tol) | (x > upper + tol)
    if np.any(bad):
        idx = np.flatnonzero(bad).tolist()
        raise DesignBoundsError(
            f"design out of bounds at indices {idx}: x={x.tolist()}"
        )
    return x
