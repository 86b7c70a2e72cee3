"""Input validation helpers shared across the package.

Validation raises ``ValueError`` with a message naming the offending
argument, so estimator and CLI layers can surface it directly.
"""

import numpy as np


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def as_binary_array(x, name: str = "input") -> np.ndarray:
    """Coerce to an integer array and check every entry is 0 or 1."""
    arr = np.asarray(x)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(np.int8)


def as_binary_vector(x, name: str = "input") -> np.ndarray:
    arr = as_binary_array(x, name)
    require(arr.ndim == 1, f"{name} must be one-dimensional")
    return arr


def as_event_frames(x, name: str = "frames") -> np.ndarray:
    """Coerce to an integer array with values in {-1, 0, +1}."""
    arr = np.asarray(x)
    if arr.size and not np.isin(arr, (-1, 0, 1)).all():
        raise ValueError(f"{name} must contain only -1/0/+1 values")
    return arr.astype(np.int8)


def check_shape(arr: np.ndarray, shape: tuple, name: str = "input") -> None:
    require(
        arr.shape == shape,
        f"{name} has shape {arr.shape}, expected {shape}",
    )
