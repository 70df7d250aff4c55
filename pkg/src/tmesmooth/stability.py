"""Mean-square stability of sigma-point TME smoothers.

The theoretical side evaluates the error bound on ``E||X_k - m^s_k||^2``
from a set of constants. The empirical side estimates the same quantity by
Monte Carlo, and samples ``Q^M`` and the Jacobian of ``g^M`` over a box to
give estimates (never certificates) of two of the constants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.stats import norm

from .exceptions import ConditionViolatedError, EstimationError, RunFailedError
from .methods import build_pipeline, map_runs
from .quadrature import SigmaRule
from .simulate import simulate_records
from .tme import TaylorMomentExpansion

__all__ = [
    "StabilityConstants",
    "ErrorCurve",
    "gain_constant",
    "theoretical_bound",
    "bound_from_gain",
    "mc_error_estimate",
    "empirical_constants",
]


def _nonneg(value, name):
    value = float(value)
    if not (np.isfinite(value) and value >= 0.0):
        raise ValueError(f"{name} must be finite and non-negative, got {value}")
    return value


@dataclass(frozen=True)
class StabilityConstants:
    """Constants of the smoother stability bound.

    ``c_f`` bounds the filter error at step k and may be a callable or a
    number. ``c_Q`` must be strictly positive; the others may be zero (a zero
    ``c_S`` describes an exact sigma-point rule).
    """

    c_f: Union[Callable[[int], float], float]
    c_P: float
    c_g: float
    c_S: float
    c_Q: float
    c_bar: float
    c_chi: float
    estimated: tuple = field(default=())

    def __post_init__(self):
        for name in ("c_P", "c_g", "c_S", "c_bar", "c_chi"):
            object.__setattr__(self, name, _nonneg(getattr(self, name), name))
        c_Q = float(self.c_Q)
        if not c_Q > 0.0:
            raise ValueError(f"c_Q must be strictly positive, got {c_Q}")
        object.__setattr__(self, "c_Q", c_Q)

    def filter_bound(self, k: int) -> float:
        return float(self.c_f(k)) if callable(self.c_f) else float(self.c_f)


def gain_constant(c: StabilityConstants) -> tuple[float, bool]:
    """``c_G = c_P^2 c_chi (c_g + c_S) / c_Q^2`` and whether ``2 c_G < 1``."""
    c_G = c.c_P**2 * c.c_chi * (c.c_g + c.c_S) / c.c_Q**2
    return c_G, bool(2.0 * c_G < 1.0)


def bound_from_gain(c_f, c_G: float, c_bar: float, T: int, k: int) -> float:
    """The three-case bound for given ``c_f``, ``c_G`` and ``c_bar``."""
    T, k = int(T), int(k)
    if not 1 <= k <= T:
        raise ValueError(f"need 1 <= k <= T, got k={k}, T={T}")
    f = c_f if callable(c_f) else (lambda _k: c_f)
    if k == T:
        return float(f(T))
    if k == T - 1:
        return 2.0 * (float(f(T - 1)) + c_G * c_bar)
    if not 2.0 * c_G < 1.0:
        raise ConditionViolatedError(f"bound needs 2 c_G < 1, got c_G = {c_G}")
    return 2.0 * float(f(k)) + (4.0 * c_G / (1.0 - 2.0 * c_G) + (2.0 * c_G) ** (T - k)) * c_bar


def theoretical_bound(c: StabilityConstants, T: int, k: int) -> float:
    """Upper bound on ``E||X_k - m^s_k||^2`` for ``1 <= k <= T``."""
    c_G, _ = gain_constant(c)
    return bound_from_gain(c.filter_bound, c_G, c.c_bar, T, k)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class ErrorCurve:
    """Per-step mean squared smoothing error with a 0.95 normal interval."""

    k: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_runs: int

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.ci_high - self.ci_low)


def _default_methods(config) -> tuple[str, str]:
    filt = config.filter or f"ghf-tme-{config.order}"
    smoo = config.smoother or f"ghs-tme-{config.order}"
    return filt, smoo


def _squared_errors(config, indices) -> list[np.ndarray]:
    pipe = build_pipeline(config)
    filt, smoo = _default_methods(config)
    run_smoother = pipe.smoother(smoo)
    out = []
    for rec in simulate_records(config, indices):
        if rec.diverged_at >= 0:
            raise RunFailedError(f"truth diverged at fine step {rec.diverged_at}", config.seed, rec.index)
        try:
            sr = run_smoother(pipe.filter(filt, rec.data))
        except (EstimationError, np.linalg.LinAlgError) as err:
            raise RunFailedError(str(err), config.seed, rec.index) from err
        err2 = np.sum((rec.truth.states[1:] - sr.means[1:]) ** 2, axis=1)
        out.append(err2)
    return out


def mc_error_estimate(config, n_runs: int, workers: int | None = None, level: float = 0.95) -> ErrorCurve:
    """Monte Carlo estimate of ``E||X_k - m^s_k||^2`` for k = 1..T.

    Each run simulates a record, filters and smooths it with the configured
    methods (TME of ``config.order`` with ``config.rule`` by default).
    """
    n_runs = int(n_runs)
    if n_runs < 2:
        raise ValueError("n_runs must be at least 2")
    config.require_seed()
    workers = config.workers if workers is None else workers
    errs = np.stack(map_runs(_squared_errors, config, n_runs, workers))
    mean = errs.mean(axis=0)
    sd = errs.std(axis=0, ddof=1)
    half = norm.ppf(0.5 + level / 2.0) * sd / np.sqrt(n_runs)
    k = np.arange(1, errs.shape[1] + 1)
    return ErrorCurve(k, mean, mean - half, mean + half, n_runs)


# ---------------------------------------------------------------------------
# sampled constants


def empirical_constants(
    model,
    rule: SigmaRule,
    M: int,
    dt: float,
    box: tuple[float, float] = (-20.0, 20.0),
    n_samples: int = 1000,
    seed: int = 0,
    *,
    c_f: Union[Callable, float] = 1.0,
    c_P: float = 1.0,
    c_S: float = 0.0,
    c_bar: float = 1.0,
) -> StabilityConstants:
    """Sample-based estimates of ``c_Q``, ``c_g`` plus the rule's ``c_chi``.

    ``c_Q`` is the smallest ``lambda_min(Q^M(x))`` and ``c_g`` the largest
    squared spectral norm of the Jacobian of ``g^M`` over uniform samples of
    the box (its corners are included). The remaining constants are
    user-supplied what-if values. ``estimated`` names the sampled fields.
    """
    low, high = float(box[0]), float(box[1])
    if not high >= low:
        raise ValueError("box must satisfy low <= high")
    d = model.dim
    rng = np.random.Generator(np.random.Philox(seed))
    corners = np.array(np.meshgrid(*[[low, high]] * d, indexing="ij")).reshape(d, -1).T
    pts = np.vstack([corners, rng.uniform(low, high, size=(int(n_samples), d))])
    tme = TaylorMomentExpansion(model, M, max_depth=max(6, 2 * M + 1))
    Q = tme.cov(pts, dt)
    J = tme.mean_jacobian(pts, dt)
    c_Q = float(np.min(np.linalg.eigvalsh(Q)[:, 0]))
    c_g = float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1)) ** 2))
    return StabilityConstants(c_f, c_P, c_g, c_S, c_Q, c_bar, rule.c_chi, estimated=("c_Q", "c_g", "c_chi"))
