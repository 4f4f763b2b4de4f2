"""Input validation helpers shared by the estimators and functional API."""
from __future__ import annotations

from typing import Iterable

import numpy as np


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_nonnegative(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")
    return value


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be finite and > 0, got {value}")
    return value


def check_finite_array(arr, name: str, shape: tuple | None = None, dtype=float) -> np.ndarray:
    arr = np.asarray(arr, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_symmetric_zero_diag(m, name: str, atol: float = 1e-12) -> np.ndarray:
    m = check_finite_array(m, name)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=atol, rtol=0):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.abs(np.diag(m)) > atol):
        raise ValueError(f"{name} must have zero diagonal")
    return m


def check_site_set(sites: Iterable[int], n: int, name: str = "subsystem") -> np.ndarray:
    """Return sorted unique 0-based site indices, rejecting out-of-range entries."""
    arr = np.asarray(sorted(set(int(s) for s in sites)), dtype=int)
    if arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise IndexError(f"{name} has sites outside [0, {n})")
    return arr


def check_same_size(params, instance) -> None:
    if params.n != instance.n:
        raise ValueError(
            f"parameter size n={params.n} does not match instance size n={instance.n}"
        )
