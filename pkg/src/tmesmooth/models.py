"""Continuous-discrete state-space models.

State functions (drift, dispersion, measurement) take the state as a
sequence of ``d`` components and return sequences. Components may be floats,
numpy arrays of a common batch shape, or :class:`~tmesmooth.differentiation.Jet`
instances, so a single definition serves simulation, quadrature and exact
differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .differentiation import SmoothScalarField
from .validation import check_positive, check_square, check_symmetric_psd, check_times, check_vector

__all__ = [
    "DiffusionModel",
    "MeasurementModel",
    "InitialLaw",
    "ObservationSchedule",
    "make_lorenz63",
    "make_ou",
    "make_benes",
    "make_linear",
    "make_linear_measurement",
    "make_first_coordinate_measurement",
    "diffusion_matrix",
]


def _stack_components(values, batch_shape) -> np.ndarray:
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), batch_shape) for v in values], axis=-1)


def _components(x: np.ndarray) -> list:
    return [x[..., i] for i in range(x.shape[-1])]


@dataclass(frozen=True)
class DiffusionModel:
    """The SDE ``dX = a(X) dt + b(X) dW`` with ``X`` in R^d and ``W`` in R^s."""

    dim: int
    noise_dim: int
    drift: Callable
    dispersion: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # (F, L) when drift is F x and dispersion the constant L
    linear: Optional[tuple] = None
    constant_dispersion: bool = False

    def drift_fields(self) -> list[SmoothScalarField]:
        return [SmoothScalarField(lambda x, i=i: self.drift(x)[i], self.dim) for i in range(self.dim)]

    def drift_at(self, x) -> np.ndarray:
        """Drift at a point or batch of points (last axis = state)."""
        x = np.asarray(x, dtype=float)
        return _stack_components(self.drift(_components(x)), x.shape[:-1])

    def dispersion_at(self, x) -> np.ndarray:
        """Dispersion matrices, shape ``(*batch, d, s)``."""
        x = np.asarray(x, dtype=float)
        rows = self.dispersion(_components(x))
        batch = x.shape[:-1]
        out = np.empty(batch + (self.dim, self.noise_dim))
        for i in range(self.dim):
            for k in range(self.noise_dim):
                out[..., i, k] = rows[i][k]
        return out

    def diffusion_terms(self, x) -> list[list]:
        """Entries of ``b b^T`` on state components (upper triangle mirrored).

        Each entry is summed over noise components in a fixed order, so the
        result is exactly symmetric and agrees bitwise with
        :func:`diffusion_matrix`. Exact zeros stay plain ``0.0``.
        """
        b = self.dispersion(x)
        d, s = self.dim, self.noise_dim
        out = [[0.0] * d for _ in range(d)]
        for i in range(d):
            for j in range(i, d):
                acc = 0.0
                for k in range(s):
                    bi, bj = b[i][k], b[j][k]
                    if _is_zero(bi) or _is_zero(bj):
                        continue
                    acc = bi * bj if _is_zero(acc) else acc + bi * bj
                out[i][j] = out[j][i] = acc
        return out


def _is_zero(v) -> bool:
    return np.ndim(v) == 0 and not hasattr(v, "coeffs") and float(v) == 0.0


def diffusion_matrix(model: DiffusionModel, x) -> np.ndarray:
    """``b(x) b(x)^T``; exactly symmetric, shape ``(*batch, d, d)``."""
    x = np.asarray(x, dtype=float)
    terms = model.diffusion_terms(_components(x))
    batch = x.shape[:-1]
    out = np.empty(batch + (model.dim, model.dim))
    for i in range(model.dim):
        for j in range(model.dim):
            out[..., i, j] = terms[i][j]
    return out


@dataclass(frozen=True)
class MeasurementModel:
    """``Y_k = h(X_k) + xi_k`` with ``xi_k ~ N(0, noise_cov)``."""

    dim_y: int
    h: Callable
    noise_cov: np.ndarray
    linear: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "noise_cov", check_symmetric_psd(self.noise_cov, self.dim_y, "noise_cov"))

    def h_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _stack_components(self.h(_components(x)), x.shape[:-1])


@dataclass(frozen=True)
class InitialLaw:
    """``X(t0) ~ N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = check_vector(self.mean, name="initial mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", check_symmetric_psd(self.cov, mean.shape[0], "initial covariance"))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ObservationSchedule:
    """Absolute measurement times ``t_1 < ... < t_T`` after ``t0``.

    Coincident times are rejected unless ``strict=False``.
    """

    times: np.ndarray
    t0: float = 0.0
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "times", check_times(self.times, self.t0, self.strict))

    @classmethod
    def uniform(cls, n: int, dt: float, t0: float = 0.0) -> "ObservationSchedule":
        check_positive(dt, "dt")
        return cls(t0 + dt * np.arange(1, n + 1), t0)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def steps(self) -> np.ndarray:
        """``t_k - t_{k-1}`` for k = 1..T (with ``t_0`` the initial time)."""
        return np.diff(np.r_[self.t0, self.times])


# ---------------------------------------------------------------------------
# concrete models


def make_lorenz63(kappa: float = 10.0, lam: float = 28.0, mu: float = 2.0, sigma: float = 5.0) -> DiffusionModel:
    """Stochastic Lorenz '63 system with additive isotropic noise."""
    sigma = check_positive(sigma, "sigma")
    disp = sigma * np.eye(3)

    def drift(x):
        return [kappa * (x[1] - x[0]), x[0] * (lam - x[2]) - x[1], x[0] * x[1] - mu * x[2]]

    def dispersion(x):
        return disp

    return DiffusionModel(
        3, 3, drift, dispersion, "lorenz63",
        dict(kappa=kappa, lam=lam, mu=mu, sigma=sigma), constant_dispersion=True,
    )


def make_linear(F, L, name: str = "linear") -> DiffusionModel:
    """Linear SDE ``dX = F X dt + L dW`` (exact-oracle fixture)."""
    F = check_square(F, name="F")
    L = np.asarray(L, dtype=float)
    if L.ndim == 1:
        L = L.reshape(-1, 1)
    d = F.shape[0]
    if L.shape[0] != d:
        raise ValueError(f"L must have {d} rows, got {L.shape}")

    def drift(x):
        out = []
        for i in range(d):
            acc = 0.0
            for j in range(d):
                if F[i, j] != 0.0:
                    term = F[i, j] * x[j]
                    acc = term if _is_zero(acc) else acc + term
            out.append(acc)
        return out

    def dispersion(x):
        return L

    return DiffusionModel(
        d, L.shape[1], drift, dispersion, name,
        dict(F=F.tolist(), L=L.tolist()), linear=(F, L), constant_dispersion=True,
    )


def make_ou(theta: float, sigma: float) -> DiffusionModel:
    """Ornstein-Uhlenbeck process ``dX = -theta X dt + sigma dW``."""
    theta = check_positive(theta, "theta")
    sigma = check_positive(sigma, "sigma")
    model = make_linear([[-theta]], [[sigma]], name="ou")
    return DiffusionModel(
        1, 1, model.drift, model.dispersion, "ou", dict(theta=theta, sigma=sigma),
        linear=model.linear, constant_dispersion=True,
    )


def make_benes() -> DiffusionModel:
    """Benes model ``dX = tanh(X) dt + dW``."""
    unit = np.ones((1, 1))

    def drift(x):
        return [np.tanh(x[0])]

    def dispersion(x):
        return unit

    return DiffusionModel(1, 1, drift, dispersion, "benes", {}, constant_dispersion=True)


def make_linear_measurement(H, R) -> MeasurementModel:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    dy, d = H.shape

    def h(x):
        out = []
        for i in range(dy):
            acc = 0.0
            for j in range(d):
                if H[i, j] != 0.0:
                    acc = acc + H[i, j] * x[j]
            out.append(acc)
        return out

    return MeasurementModel(dy, h, np.atleast_2d(np.asarray(R, dtype=float)), linear=H)


def make_first_coordinate_measurement(dim: int, noise_var: float = 2.0) -> MeasurementModel:
    """Observe the first state coordinate with additive Gaussian noise."""
    H = np.zeros((1, dim))
    H[0, 0] = 1.0
    return make_linear_measurement(H, [[noise_var]])
