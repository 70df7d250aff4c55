"""scikit-learn style wrappers around the filters and smoothers.

``fit(Y, times)`` runs the filter and smoother on one measurement sequence
and stores the results; ``predict`` returns smoothed means. Hyperparameters
are plain constructor arguments, so ``get_params``/``set_params``/``clone``
work as usual.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .estimation import (
    ekf_rk4_filter,
    eks_rk4_smoother,
    gaussian_smoother,
    make_scheme,
    run_filter,
    smooth,
)
from .models import DiffusionModel, InitialLaw, MeasurementModel, ObservationSchedule
from .quadrature import parse_rule

__all__ = ["SigmaPointSmoother", "ExtendedSmoother"]


class _SmootherBase(BaseEstimator):
    def _schedule(self, n: int, times) -> ObservationSchedule:
        if times is None:
            if self.dt is None:
                raise ValueError("pass times or set dt")
            return ObservationSchedule.uniform(n, self.dt, self.t0)
        times = np.asarray(times, dtype=float)
        if times.shape != (n,):
            raise ValueError(f"times must have shape ({n},), got {times.shape}")
        return ObservationSchedule(times, self.t0)

    def _init(self) -> InitialLaw:
        d = self.model.dim
        mean = np.zeros(d) if self.init_mean is None else self.init_mean
        cov = np.eye(d) if self.init_cov is None else self.init_cov
        return InitialLaw(mean, cov)

    def _check(self, Y):
        if not isinstance(self.model, DiffusionModel):
            raise TypeError("model must be a DiffusionModel")
        if not isinstance(self.measurement, MeasurementModel):
            raise TypeError("measurement must be a MeasurementModel")
        Y = check_array(Y, ensure_2d=False, ensure_min_samples=0)
        if Y.ndim == 1:
            Y = Y.reshape(-1, 1)
        if Y.shape[1] != self.measurement.dim_y:
            raise ValueError(f"Y must have {self.measurement.dim_y} columns, got {Y.shape[1]}")
        return Y

    def fit(self, Y, times=None):
        """Filter and smooth ``Y`` of shape ``(T, dim_y)`` observed at ``times``."""
        Y = self._check(Y)
        schedule = self._schedule(Y.shape[0], times)
        self.filter_result_, self.smoother_result_ = self._run(Y, schedule)
        self.times_ = self.smoother_result_.times
        self.means_ = self.smoother_result_.means
        self.covs_ = self.smoother_result_.covs
        self.n_features_in_ = Y.shape[1]
        return self

    def predict(self, Y=None, times=None):
        """Smoothed means at the measurement times, shape ``(T, d)``.

        Without arguments, returns those of the fitted sequence.
        """
        if Y is None:
            check_is_fitted(self, "means_")
            return self.means_[1:].copy()
        Y = self._check(Y)
        _, sr = self._run(Y, self._schedule(Y.shape[0], times))
        return sr.means[1:]

    def score(self, Y, X_true, times=None) -> float:
        """Negative RMSE of the smoothed means against known states."""
        est = self.predict(Y, times)
        X_true = check_array(X_true)
        if X_true.shape != est.shape:
            raise ValueError(f"X_true must have shape {est.shape}")
        return -float(np.sqrt(np.mean((est - X_true) ** 2)))


class SigmaPointSmoother(_SmootherBase):
    """Sigma-point Gaussian filter and RTS-type smoother.

    Parameters
    ----------
    model, measurement : DiffusionModel, MeasurementModel
    scheme : str
        Smoother moment scheme: ``tme-M``, ``em`` or ``linear``.
    filter_scheme : str or None
        Filter moment scheme; defaults to ``scheme``.
    rule : str
        ``gh:P``, ``cubature`` or ``unscented:K``.
    """

    def __init__(
        self, model=None, measurement=None, scheme="tme-2", filter_scheme=None, rule="gh:3",
        dt=None, t0=0.0, init_mean=None, init_cov=None,
    ):
        self.model = model
        self.measurement = measurement
        self.scheme = scheme
        self.filter_scheme = filter_scheme
        self.rule = rule
        self.dt = dt
        self.t0 = t0
        self.init_mean = init_mean
        self.init_cov = init_cov

    def _run(self, Y, schedule):
        rule = parse_rule(self.rule, self.model.dim)
        smoother_scheme = make_scheme(self.scheme, self.model)
        fkind = self.filter_scheme or self.scheme
        filter_scheme = smoother_scheme if fkind == self.scheme else make_scheme(fkind, self.model)
        fr = run_filter(self.model, self.measurement, schedule, Y, self._init(), filter_scheme, rule)
        sr = smooth(fr) if filter_scheme is smoother_scheme else gaussian_smoother(fr, smoother_scheme, rule)
        return fr, sr


class ExtendedSmoother(_SmootherBase):
    """Extended Kalman filter and RTS smoother with RK4 moment propagation."""

    def __init__(self, model=None, measurement=None, n_sub=10, dt=None, t0=0.0, init_mean=None, init_cov=None):
        self.model = model
        self.measurement = measurement
        self.n_sub = n_sub
        self.dt = dt
        self.t0 = t0
        self.init_mean = init_mean
        self.init_cov = init_cov

    def _run(self, Y, schedule):
        fr = ekf_rk4_filter(self.model, self.measurement, schedule, Y, self._init(), self.n_sub)
        return fr, eks_rk4_smoother(fr)
