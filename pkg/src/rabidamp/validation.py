"""Input checks shared by the estimator-style fitting interfaces."""

from __future__ import annotations

import numpy as np


def as_1d_floats(values, name: str = "array") -> np.ndarray:
    """Coerce to a finite 1-D float array; (n, 1) columns are flattened."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_xy(x, y, min_points: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Validate paired abscissa/ordinate samples of equal length."""
    x = as_1d_floats(x, "x")
    y = as_1d_floats(y, "y")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} abscissas, {y.size} ordinates")
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} samples, got {x.size}")
    return x, y


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0.0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return value


def uniform_pitch(x: np.ndarray, rel_tol: float = 1e-9) -> float:
    """Return the grid pitch, requiring uniform ascending spacing."""
    steps = np.diff(x)
    if steps.size == 0 or np.any(steps <= 0.0):
        raise ValueError("grid must be strictly ascending")
    pitch = float(np.mean(steps))
    if np.max(np.abs(steps - pitch)) > rel_tol * max(pitch, 1e-300):
        raise ValueError("grid spacing is not uniform")
    return pitch
