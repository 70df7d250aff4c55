"""Taylor moment expansion of SDE transition moments.

The generator of ``dX = a dt + b dW`` acts on a test function ``phi`` as

    A phi = grad(phi)^T a + 1/2 trace(b b^T hess(phi)).

Truncating ``E[phi(X(t+dt)) | x] = sum_r dt^r / r! A^r phi(x)`` at order M
with ``phi(x) = x`` gives the mean approximant ``g^M``. The covariance
approximant is ``Q^M = sum_{r=1}^M dt^r / r! Phi_r`` with

    Phi_r = A^r (x x^T) - sum_{k=0}^r C(r, k) A^k x (A^{r-k} x)^T.

``Phi_r`` does not change when ``x`` is replaced by ``x - c`` for a constant
``c``. The expansion therefore works with the centred targets
``delta = x - x0`` and ``delta delta^T`` (both zero at the base point), which
drops the k = 0 and k = r terms and avoids cancellation between large
products. At order one this yields ``Phi_1 = b b^T`` bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .differentiation import (
    DEFAULT_MAX_DEPTH,
    InsufficientDegree,
    Jet,
    SmoothScalarField,
    _index,
    n_monomials,
    variables,
)
from .exceptions import DepthExceededError
from .models import DiffusionModel, _is_zero

__all__ = [
    "TaylorMomentExpansion",
    "apply_generator",
    "tme_mean",
    "tme_cov",
    "tme_phi_r",
    "ensure_psd",
    "DEFAULT_MAX_ORDER",
]

DEFAULT_MAX_ORDER = 3


def ensure_psd(Q) -> np.ndarray:
    """Symmetrize and clip eigenvalues below ``1e-12 * max(1, trace(Q)/d)``.

    Works on a single matrix or a stack ``(..., d, d)``. Matrices whose
    eigenvalues all clear the floor are returned symmetrized but otherwise
    untouched.
    """
    Q = np.asarray(Q, dtype=float)
    sym = 0.5 * (Q + np.swapaxes(Q, -1, -2))
    d = sym.shape[-1]
    eps = 1e-12 * np.maximum(1.0, np.trace(sym, axis1=-2, axis2=-1) / d)
    w, V = np.linalg.eigh(sym)
    bad = w[..., 0] < eps
    if not np.any(bad):
        return sym
    out = sym.copy()
    floor = np.broadcast_to(eps, w.shape[:-1])[bad]
    wc = np.maximum(w[bad], floor[..., None])
    Vb = V[bad]
    fixed = (Vb * wc[..., None, :]) @ np.swapaxes(Vb, -1, -2)
    out[bad] = 0.5 * (fixed + np.swapaxes(fixed, -1, -2))
    return out


def _generator(P: Jet, drift, gamma, degree: int) -> Jet:
    """Apply the generator to a (possibly stacked) jet, keeping ``degree`` orders."""
    if degree < 0:
        raise InsufficientDegree("generator needs two more derivative orders")
    d = P.dim
    out = None
    firsts = [P.diff(i) for i in range(d)]
    for i in range(d):
        a_i = drift[i]
        if _is_zero(a_i):
            continue
        term = firsts[i].truncate(degree) * a_i
        out = term if out is None else out + term
    for i in range(d):
        for j in range(i, d):
            g = gamma[i][j]
            if _is_zero(g):
                continue
            second = firsts[i].diff(j)
            term = second * g * (0.5 if i == j else 1.0)
            out = term if out is None else out + term
    if out is None:
        out = Jet(np.zeros((n_monomials(d, degree),) + P.batch_shape), d, degree)
    return out.truncate(degree)


def apply_generator(phi, model: DiffusionModel) -> SmoothScalarField:
    """The field ``x -> grad(phi)^T a + 1/2 tr(b b^T hess(phi))``."""
    if not isinstance(phi, SmoothScalarField):
        phi = SmoothScalarField(phi, model.dim)
    if phi.dim != model.dim:
        raise ValueError("field and model dimensions differ")

    def fn(xs):
        P = phi.on_jets(xs)
        return _generator(P, model.drift(xs), model.diffusion_terms(xs), P.degree - 2)

    depth = None if phi.depth is None else phi.depth + 2
    return SmoothScalarField(fn, model.dim, depth, phi.max_depth)


class TaylorMomentExpansion:
    """Order-M Taylor moment expansion for one model, vectorized over points.

    All generator iterates of ``x`` and ``x x^T`` are produced by a single
    pass of jet arithmetic per batch of evaluation points.

    Parameters
    ----------
    model : DiffusionModel
    order : int
        Expansion order M >= 1.
    max_depth : int
        Largest jet degree allowed. Order M needs ``2 M``; Jacobians of the
        mean need ``2 M + 1``.
    """

    def __init__(self, model: DiffusionModel, order: int, max_depth: int = DEFAULT_MAX_DEPTH):
        if int(order) != order or order < 1:
            raise ValueError(f"TME order must be a positive integer, got {order}")
        order = int(order)
        if 2 * order > max_depth:
            raise DepthExceededError(f"TME order {order} needs depth {2 * order} > max_depth={max_depth}")
        self.model = model
        self.order = order
        self.max_depth = max_depth
        d = model.dim
        self._pairs = [(i, j) for i in range(d) for j in range(i, d)]

    def _iterate_jets(self, x: np.ndarray, extra: int):
        """Jets of ``A^r delta`` and ``A^r (delta delta^T)`` for r = 1..M."""
        model, M = self.model, self.order
        d = model.dim
        top = 2 * M + extra
        if top > self.max_depth:
            raise DepthExceededError(f"need depth {top} > max_depth={self.max_depth}")
        xs = variables(x, top - 2)
        drift = model.drift(xs)
        gamma = model.diffusion_terms(xs)
        batch = x.shape[:-1]
        n_entries = d + len(self._pairs)
        coeffs = np.zeros((n_monomials(d, top), n_entries) + (1,) * len(batch))
        index = _index(d, top)
        for i in range(d):
            alpha = [0] * d
            alpha[i] = 1
            coeffs[index[tuple(alpha)], i] = 1.0
        for e, (i, j) in enumerate(self._pairs):
            alpha = [0] * d
            alpha[i] += 1
            alpha[j] += 1
            coeffs[index[tuple(alpha)], d + e] = 1.0
        P = Jet(coeffs, d, top)
        iterates = []
        for r in range(1, M + 1):
            P = _generator(P, drift, gamma, top - 2 * r)
            iterates.append(P)
        return iterates

    def _split(self, values: np.ndarray, batch) -> tuple[np.ndarray, np.ndarray]:
        """Entries ``(n_entries, *batch)`` -> mean part ``(*batch, d)`` and matrix ``(*batch, d, d)``."""
        d = self.model.dim
        values = np.broadcast_to(values, (values.shape[0],) + batch)
        mean = np.moveaxis(values[:d], 0, -1)
        mat = np.empty(batch + (d, d))
        for e, (i, j) in enumerate(self._pairs):
            mat[..., i, j] = values[d + e]
            mat[..., j, i] = values[d + e]
        return mean, mat

    def iterates(self, x):
        """Values of ``A^r x`` (r = 0..M) and ``A^r (delta delta^T)`` (r = 1..M).

        Returns ``(mean_iterates, square_iterates)`` with shapes
        ``(M + 1, *batch, d)`` and ``(M, *batch, d, d)``.
        """
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        jets = self._iterate_jets(x, 0)
        means = [x]
        squares = []
        for P in jets:
            m, s = self._split(P.coeffs[0], batch)
            means.append(m)
            squares.append(s)
        return np.stack(means), np.stack(squares)

    def _phis(self, A: np.ndarray, B: np.ndarray) -> list[np.ndarray]:
        phis = []
        for r in range(1, self.order + 1):
            phi = B[r - 1].copy()
            for k in range(1, r):
                phi = phi - math.comb(r, k) * (A[k][..., :, None] * A[r - k][..., None, :])
            phis.append(0.5 * (phi + np.swapaxes(phi, -1, -2)))
        return phis

    def mean(self, x, dt: float) -> np.ndarray:
        """``g^M(x)`` at a point or batch of points."""
        dt = _check_dt(dt)
        A, _ = self.iterates(x)
        return self._mean_from(A, dt)

    def _mean_from(self, A, dt):
        g = A[0]
        for r in range(1, self.order + 1):
            g = g + (dt**r / math.factorial(r)) * A[r]
        return g

    def phi(self, r: int, x) -> np.ndarray:
        """``Phi_r(x)`` for ``1 <= r <= M``, symmetrized."""
        if not 1 <= r <= self.order:
            raise ValueError(f"r must lie in [1, {self.order}], got {r}")
        A, B = self.iterates(x)
        return self._phis(A, B)[r - 1]

    def cov(self, x, dt: float) -> np.ndarray:
        """``Q^M(x)`` after PSD repair."""
        return self.moments(x, dt)[1]

    def cov_raw(self, x, dt: float) -> np.ndarray:
        """``Q^M(x)`` symmetrized but without PSD repair."""
        dt = _check_dt(dt)
        A, B = self.iterates(x)
        return self._cov_from(A, B, dt)

    def _cov_from(self, A, B, dt):
        Q = None
        for r, phi in enumerate(self._phis(A, B), start=1):
            term = (dt**r / math.factorial(r)) * phi
            Q = term if Q is None else Q + term
        return Q

    def moments(self, x, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """``(g^M(x), Q^M(x))`` from one expansion pass."""
        dt = _check_dt(dt)
        A, B = self.iterates(x)
        return self._mean_from(A, dt), ensure_psd(self._cov_from(A, B, dt))

    def mean_jacobian(self, x, dt: float) -> np.ndarray:
        """Exact Jacobian of ``g^M``, shape ``(*batch, d, d)``."""
        dt = _check_dt(dt)
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        d = self.model.dim
        J = np.broadcast_to(np.eye(d), batch + (d, d)).copy()
        for r, P in enumerate(self._iterate_jets(x, 1), start=1):
            lin = P.linear_part()  # (n_entries, *batch, d)
            lin = np.broadcast_to(lin[:d], (d,) + batch + (d,))
            J = J + (dt**r / math.factorial(r)) * np.moveaxis(lin, 0, -2)
        return J


def _check_dt(dt) -> float:
    dt = float(dt)
    if not (np.isfinite(dt) and dt > 0.0):
        raise ValueError(f"time step must be positive, got {dt}")
    return dt


def tme_mean(model: DiffusionModel, order: int, x, dt: float) -> np.ndarray:
    return TaylorMomentExpansion(model, order).mean(x, dt)


def tme_cov(model: DiffusionModel, order: int, x, dt: float) -> np.ndarray:
    return TaylorMomentExpansion(model, order).cov(x, dt)


def tme_phi_r(model: DiffusionModel, r: int, x, order: int | None = None) -> np.ndarray:
    order = r if order is None else order
    return TaylorMomentExpansion(model, order).phi(r, x)
