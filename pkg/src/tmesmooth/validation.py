"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

__all__ = [
    "check_vector",
    "check_square",
    "check_symmetric_psd",
    "check_spd",
    "check_times",
    "check_data",
    "check_positive",
]


def check_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_square(a, dim: int | None = None, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"{name} must be {dim}x{dim}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_symmetric_psd(a, dim: int | None = None, name: str = "covariance", tol: float = 1e-10) -> np.ndarray:
    a = check_square(a, dim, name)
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if not np.allclose(a, a.T, rtol=0.0, atol=tol * scale):
        raise ValueError(f"{name} must be symmetric")
    a = 0.5 * (a + a.T)
    if a.size and np.linalg.eigvalsh(a)[0] < -tol * scale:
        raise ValueError(f"{name} must be positive semidefinite")
    return a


def check_spd(a, dim: int | None = None, name: str = "covariance") -> np.ndarray:
    a = check_symmetric_psd(a, dim, name)
    if np.linalg.eigvalsh(a)[0] <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    return a


def check_positive(value, name: str) -> float:
    value = float(value)
    if not (np.isfinite(value) and value > 0.0):
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_times(times, t0: float = 0.0, strict: bool = True) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if not np.all(np.isfinite(times)):
        raise ValueError("observation times must be finite")
    if times.size:
        if times[0] <= t0:
            raise ValueError(f"first observation time {times[0]} must exceed t0={t0}")
        steps = np.diff(times)
        if strict and np.any(steps <= 0.0):
            raise ValueError("observation times must be strictly increasing")
        if np.any(steps < 0.0):
            raise ValueError("observation times must be non-decreasing")
    return times


def check_data(data, n_steps: int, dim_y: int) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1 and dim_y == 1:
        data = data.reshape(-1, 1)
    if n_steps == 0 and data.size == 0:
        return data.reshape(0, dim_y)
    if data.ndim != 2 or data.shape != (n_steps, dim_y):
        raise ValueError(f"data must have shape ({n_steps}, {dim_y}), got {data.shape}")
    return data
