"""Continuous-discrete Gaussian filters and smoothers.

Sigma-point prediction uses a pluggable :class:`MomentScheme` supplying the
transition mean ``g`` and covariance ``Q`` over one interval. The smoother is
the Rauch-Tung-Striebel type recursion driven by predicted moments and the
cross-covariance ``D_{k+1} = Cov(X_k, X_{k+1} | y_{1:k})``.

Arrays in :class:`FilterResult` and :class:`SmootherResult` are indexed by
time step ``k = 0..T`` where ``k = 0`` is the initial law at ``t0``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, expm

from .differentiation import jacobian, value_and_jacobian
from .exceptions import EstimationError, NotPSDError, SingularInnovationError, SingularPredictionError
from .models import DiffusionModel, InitialLaw, MeasurementModel, ObservationSchedule, diffusion_matrix
from .quadrature import SigmaRule, cholesky_sqrt
from .tme import TaylorMomentExpansion, ensure_psd
from .validation import check_data

__all__ = [
    "GaussianState",
    "MomentScheme",
    "TMEScheme",
    "EulerMaruyamaScheme",
    "LinearExactScheme",
    "FilterResult",
    "SmootherResult",
    "predict",
    "update",
    "run_filter",
    "smooth",
    "gaussian_smoother",
    "ekf_rk4_predict",
    "ekf_update",
    "ekf_rk4_filter",
    "eks_rk4_smoother",
]


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray


# ---------------------------------------------------------------------------
# moment schemes


class MomentScheme:
    """Transition moments ``(g(x), Q(x))`` over a step ``dt``, batched over ``x``."""

    name = "scheme"

    def __init__(self, model: DiffusionModel):
        self.model = model

    def moments(self, x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


class TMEScheme(MomentScheme):
    def __init__(self, model: DiffusionModel, order: int = 2):
        super().__init__(model)
        self.expansion = TaylorMomentExpansion(model, order)
        self.order = order
        self.name = f"tme-{order}"

    def moments(self, x, dt):
        return self.expansion.moments(x, dt)


class EulerMaruyamaScheme(MomentScheme):
    """``g = x + a(x) dt`` and ``Q = b b^T dt``."""

    name = "em"

    def moments(self, x, dt):
        x = np.asarray(x, dtype=float)
        g = x + dt * self.model.drift_at(x)
        Q = ensure_psd(dt * diffusion_matrix(self.model, x))
        return g, Q


class LinearExactScheme(MomentScheme):
    """Exact discretization of a linear SDE (matrix exponential, Van Loan)."""

    name = "linear"

    def __init__(self, model: DiffusionModel):
        if model.linear is None:
            raise ValueError("LinearExactScheme needs a linear model")
        super().__init__(model)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def transition(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        if dt not in self._cache:
            F, L = self.model.linear
            d = F.shape[0]
            block = np.zeros((2 * d, 2 * d))
            block[:d, :d] = -F
            block[:d, d:] = L @ L.T
            block[d:, d:] = F.T
            E = expm(block * dt)
            A = E[d:, d:].T
            Q = A @ E[:d, d:]
            self._cache[dt] = (A, 0.5 * (Q + Q.T))
        return self._cache[dt]

    def moments(self, x, dt):
        x = np.asarray(x, dtype=float)
        A, Q = self.transition(float(dt))
        return x @ A.T, np.broadcast_to(Q, x.shape[:-1] + Q.shape)


def make_scheme(kind: str, model: DiffusionModel) -> MomentScheme:
    """Scheme from a name: ``em``, ``linear`` or ``tme-M``."""
    kind = kind.strip().lower()
    if kind == "em":
        return EulerMaruyamaScheme(model)
    if kind == "linear":
        return LinearExactScheme(model)
    if kind.startswith("tme-"):
        return TMEScheme(model, int(kind[4:]))
    raise ValueError(f"unknown moment scheme {kind!r}")


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class FilterResult:
    times: np.ndarray
    filter_means: np.ndarray
    filter_covs: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    cross_covs: np.ndarray
    method: str = ""

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    def filtered(self, k: int) -> GaussianState:
        return GaussianState(self.filter_means[k], self.filter_covs[k])


@dataclass(frozen=True)
class SmootherResult:
    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    gains: np.ndarray
    method: str = ""


# ---------------------------------------------------------------------------
# sigma-point steps


def _wsum(w: np.ndarray, arr: np.ndarray) -> np.ndarray:
    return np.sum(w.reshape((-1,) + (1,) * (arr.ndim - 1)) * arr, axis=0)


def predict(scheme: MomentScheme, rule: SigmaRule, state: GaussianState, dt: float):
    """Sigma-point prediction; returns ``(predicted_state, cross_covariance)``.

    One set of sigma points feeds the predicted mean, the predicted
    covariance and the cross-covariance.
    """
    dt = float(dt)
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    m = np.asarray(state.mean, dtype=float)
    L = cholesky_sqrt(state.cov, "prediction")
    chi = m + rule.nodes @ L.T
    g, Q = scheme.moments(chi, dt)
    w = rule.weights
    m_pred = _wsum(w, g)
    dg = g - m_pred
    dx = chi - m
    P_pred = _wsum(w, Q) + _wsum(w, dg[:, :, None] * dg[:, None, :])
    D = _wsum(w, dx[:, :, None] * dg[:, None, :])
    return GaussianState(m_pred, ensure_psd(P_pred)), D


def _factor(S: np.ndarray, exc, message: str):
    try:
        return cholesky_sqrt(S)
    except NotPSDError as err:
        raise exc(message) from err


def update(predicted: GaussianState, y, meas: MeasurementModel, rule: SigmaRule) -> GaussianState:
    """Sigma-point (statistical linearization) measurement update."""
    m = np.asarray(predicted.mean, dtype=float)
    P = np.asarray(predicted.cov, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    L = cholesky_sqrt(P, "update")
    chi = m + rule.nodes @ L.T
    hy = meas.h_at(chi)
    w = rule.weights
    y_hat = _wsum(w, hy)
    dy = hy - y_hat
    dx = chi - m
    S = _wsum(w, dy[:, :, None] * dy[:, None, :]) + meas.noise_cov
    C = _wsum(w, dx[:, :, None] * dy[:, None, :])
    Ls = _factor(S, SingularInnovationError, "innovation covariance is singular")
    K = cho_solve((Ls, True), C.T).T
    m_new = m + K @ (y - y_hat)
    P_new = P - K @ S @ K.T
    return GaussianState(m_new, ensure_psd(P_new))


def _filter_loop(schedule, data, init, step_predict, step_update, method):
    steps = schedule.steps
    T = len(schedule)
    d = init.dim
    fm = np.empty((T + 1, d))
    fP = np.empty((T + 1, d, d))
    pm = np.empty((T + 1, d))
    pP = np.empty((T + 1, d, d))
    D = np.zeros((T + 1, d, d))
    fm[0], fP[0] = init.mean, init.cov
    pm[0], pP[0] = init.mean, init.cov
    state = GaussianState(init.mean, init.cov)
    for k in range(1, T + 1):
        try:
            pred, cross = step_predict(state, steps[k - 1])
            state = step_update(pred, data[k - 1])
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as err:
            raise EstimationError(f"{type(err).__name__}: {err}", k) from err
        if not (np.all(np.isfinite(state.mean)) and np.all(np.isfinite(state.cov))):
            raise EstimationError("non-finite filter estimate", k)
        pm[k], pP[k], D[k] = pred.mean, pred.cov, cross
        fm[k], fP[k] = state.mean, state.cov
    times = np.r_[schedule.t0, schedule.times]
    return FilterResult(times, fm, fP, pm, pP, D, method)


def run_filter(
    model: DiffusionModel,
    meas: MeasurementModel,
    schedule: ObservationSchedule,
    data,
    init: InitialLaw,
    scheme: MomentScheme,
    rule: SigmaRule,
) -> FilterResult:
    """Sigma-point Gaussian filter from ``init`` over all measurement times."""
    if scheme.model is not model and scheme.model.dim != model.dim:
        raise ValueError("scheme and model dimensions differ")
    data = check_data(data, len(schedule), meas.dim_y)
    return _filter_loop(
        schedule, data, init,
        lambda st, dt: predict(scheme, rule, st, dt),
        lambda pred, y: update(pred, y, meas, rule),
        f"spf-{scheme.name}",
    )


# ---------------------------------------------------------------------------
# smoothing


def _rts(fr: FilterResult, pred_means, pred_covs, cross, method: str) -> SmootherResult:
    T = fr.n_steps
    d = fr.filter_means.shape[1]
    ms = np.empty_like(fr.filter_means)
    Ps = np.empty_like(fr.filter_covs)
    G = np.zeros((max(T, 0), d, d))
    ms[T] = fr.filter_means[T]
    Ps[T] = fr.filter_covs[T]
    for k in range(T - 1, -1, -1):
        try:
            Lp = cholesky_sqrt(pred_covs[k + 1])
            if not np.any(Lp):
                raise NotPSDError("zero predicted covariance")
        except NotPSDError as err:
            raise SingularPredictionError(f"predicted covariance at step {k + 1} is singular", k) from err
        gain = cho_solve((Lp, True), cross[k + 1].T).T
        ms[k] = fr.filter_means[k] + gain @ (ms[k + 1] - pred_means[k + 1])
        Ps[k] = ensure_psd(fr.filter_covs[k] + gain @ (Ps[k + 1] - pred_covs[k + 1]) @ gain.T)
        G[k] = gain
    return SmootherResult(fr.times, ms, Ps, G, method)


def smooth(fr: FilterResult) -> SmootherResult:
    """Backward recursion using the predictions stored by the filter."""
    return _rts(fr, fr.pred_means, fr.pred_covs, fr.cross_covs, fr.method.replace("f-", "s-", 1))


def _repredict(fr: FilterResult, step_predict: Callable):
    T = fr.n_steps
    pm = fr.pred_means.copy()
    pP = fr.pred_covs.copy()
    D = fr.cross_covs.copy()
    dts = np.diff(fr.times)
    for k in range(T):
        try:
            pred, cross = step_predict(fr.filtered(k), dts[k])
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as err:
            raise EstimationError(f"{type(err).__name__}: {err}", k) from err
        pm[k + 1], pP[k + 1], D[k + 1] = pred.mean, pred.cov, cross
    return pm, pP, D


def gaussian_smoother(fr: FilterResult, scheme: MomentScheme, rule: SigmaRule) -> SmootherResult:
    """Sigma-point Gaussian smoother on any filter output.

    Predicted moments and cross-covariances are recomputed from the filtering
    densities with ``scheme`` and ``rule``, so the filter that produced ``fr``
    may use a different method.
    """
    pm, pP, D = _repredict(fr, lambda st, dt: predict(scheme, rule, st, dt))
    return _rts(fr, pm, pP, D, f"sps-{scheme.name}")


# ---------------------------------------------------------------------------
# extended Kalman baseline


def ekf_rk4_predict(model: DiffusionModel, state: GaussianState, dt: float, n_sub: int = 10):
    """Integrate the linearized moment ODEs with classical RK4.

    ``dm/dt = a(m)`` and ``dP/dt = J P + P J^T + b b^T`` with ``J`` the drift
    Jacobian at ``m``. The cross-covariance is ``P A^T`` where ``A`` composes
    ``I + J h`` over the substeps.
    """
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    h = float(dt) / n_sub
    d = model.dim
    eye = np.eye(d)

    gamma = diffusion_matrix(model, state.mean) if model.constant_dispersion else None

    def rhs(m, P):
        a, J = value_and_jacobian(model.drift, m)
        JP = J @ P
        dP = JP + JP.T + (gamma if gamma is not None else diffusion_matrix(model, m))
        return a, dP, J

    m = np.asarray(state.mean, dtype=float)
    P = np.asarray(state.cov, dtype=float)
    A = eye
    for _ in range(n_sub):
        k1m, k1P, J0 = rhs(m, P)
        k2m, k2P, _ = rhs(m + 0.5 * h * k1m, P + 0.5 * h * k1P)
        k3m, k3P, _ = rhs(m + 0.5 * h * k2m, P + 0.5 * h * k2P)
        k4m, k4P, _ = rhs(m + h * k3m, P + h * k3P)
        m = m + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        P = P + (h / 6.0) * (k1P + 2.0 * k2P + 2.0 * k3P + k4P)
        P = 0.5 * (P + P.T)
        A = (eye + h * J0) @ A
    D = np.asarray(state.cov) @ A.T
    return GaussianState(m, ensure_psd(P)), D


def ekf_update(predicted: GaussianState, y, meas: MeasurementModel) -> GaussianState:
    """First-order linearized Kalman update at the predicted mean."""
    m = np.asarray(predicted.mean, dtype=float)
    P = np.asarray(predicted.cov, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = jacobian(meas.h, m)
    y_hat = meas.h_at(m)
    S = H @ P @ H.T + meas.noise_cov
    Ls = _factor(S, SingularInnovationError, "innovation covariance is singular")
    K = cho_solve((Ls, True), H @ P).T
    return GaussianState(m + K @ (y - y_hat), ensure_psd(P - K @ S @ K.T))


def ekf_rk4_filter(model, meas, schedule, data, init, n_sub: int = 10) -> FilterResult:
    data = check_data(data, len(schedule), meas.dim_y)
    return _filter_loop(
        schedule, data, init,
        lambda st, dt: ekf_rk4_predict(model, st, dt, n_sub),
        lambda pred, y: ekf_update(pred, y, meas),
        "ekf-rk4",
    )


def eks_rk4_smoother(fr: FilterResult, model: DiffusionModel | None = None, n_sub: int = 10) -> SmootherResult:
    """Extended RTS smoother with RK4 moment propagation.

    Uses the stored predictions when ``fr`` comes from :func:`ekf_rk4_filter`
    and no model is given; otherwise recomputes them from the filtering
    densities.
    """
    if model is None:
        if fr.method != "ekf-rk4":
            raise ValueError("model required to smooth a non-EKF filter result")
        return _rts(fr, fr.pred_means, fr.pred_covs, fr.cross_covs, "eks-rk4")
    pm, pP, D = _repredict(fr, lambda st, dt: ekf_rk4_predict(model, st, dt, n_sub))
    return _rts(fr, pm, pP, D, "eks-rk4")


def with_method(fr: FilterResult, method: str) -> FilterResult:
    return replace(fr, method=method)
