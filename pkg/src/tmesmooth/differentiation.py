"""Exact forward-mode differentiation with truncated Taylor jets.

A :class:`Jet` is a truncated multivariate Taylor polynomial in ``d`` local
variables ``delta`` around a base point. Its coefficients are the scaled
partial derivatives ``D^alpha f / alpha!`` up to a total degree ``n``, so a
jet is an augmented number carrying a value together with every directional
derivative up to order ``n``. Arithmetic on jets is exact polynomial
arithmetic followed by truncation, which makes nested differentiation exact:
differentiating a degree ``n`` jet gives a degree ``n - 1`` jet with no loss.

Coefficient arrays have shape ``(n_monomials, *batch)`` so that a single jet
evaluates a field at a whole batch of base points (for example all sigma
points of a quadrature rule) at once.

The depth of a field is the number of derivative orders its evaluation
consumes internally. Evaluating a field of depth ``q`` needs jets of degree
``q``; taking its gradient needs degree ``q + 1``. Requests beyond the
configured ``max_depth`` raise :class:`DepthExceededError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Callable, Sequence

import numpy as np

from .exceptions import DepthExceededError

__all__ = [
    "DEFAULT_MAX_DEPTH",
    "Jet",
    "SmoothScalarField",
    "field",
    "nest",
    "gradient",
    "hessian",
    "jacobian",
    "value_and_jacobian",
    "variables",
]

DEFAULT_MAX_DEPTH = 6


class InsufficientDegree(DepthExceededError):
    """Raised internally when a jet has no derivative information left."""


# ---------------------------------------------------------------------------
# monomial bookkeeping


@lru_cache(maxsize=None)
def _monomials(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Exponent tuples of total degree <= ``degree``, graded then lexicographic.

    Graded ordering makes truncation to a lower degree a prefix slice.
    """
    out: list[tuple[int, ...]] = []
    for deg in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            alpha = [0] * dim
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return tuple(out)


@lru_cache(maxsize=None)
def _index(dim: int, degree: int) -> dict[tuple[int, ...], int]:
    return {alpha: k for k, alpha in enumerate(_monomials(dim, degree))}


def n_monomials(dim: int, degree: int) -> int:
    return math.comb(degree + dim, dim)


@lru_cache(maxsize=None)
def _mul_table(dim: int, degree: int):
    """Pairs ``(i, j)`` whose monomials multiply into ``k``, grouped by ``k``."""
    monos = _monomials(dim, degree)
    index = _index(dim, degree)
    rows: list[tuple[int, int, int]] = []
    for i, a in enumerate(monos):
        da = sum(a)
        for j, b in enumerate(monos):
            if da + sum(b) > degree:
                continue
            k = index[tuple(x + y for x, y in zip(a, b))]
            rows.append((k, i, j))
    rows.sort()
    table = np.array(rows, dtype=np.intp)
    ks = table[:, 0]
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    return table[:, 1].copy(), table[:, 2].copy(), starts


@lru_cache(maxsize=None)
def _diff_table(dim: int, degree: int, axis: int):
    """Source indices and factors for d/d(delta_axis) of a degree ``degree`` jet."""
    src_index = _index(dim, degree)
    monos = _monomials(dim, degree - 1)
    src = np.empty(len(monos), dtype=np.intp)
    fac = np.empty(len(monos))
    for k, beta in enumerate(monos):
        up = list(beta)
        up[axis] += 1
        src[k] = src_index[tuple(up)]
        fac[k] = up[axis]
    return src, fac


@lru_cache(maxsize=None)
def _unit_index(dim: int, degree: int) -> tuple[int, ...]:
    index = _index(dim, degree)
    units = []
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        units.append(index[tuple(e)])
    return tuple(units)


@lru_cache(maxsize=None)
def _tanh_poly(k: int) -> np.ndarray:
    """Coefficients (in t = tanh x) of the k-th derivative of tanh."""
    p = np.polynomial.Polynomial([0.0, 1.0])
    one_minus_t2 = np.polynomial.Polynomial([1.0, 0.0, -1.0])
    for _ in range(k):
        p = p.deriv() * one_minus_t2
    return p.coef


def _pad(coeffs: np.ndarray, batch_ndim: int) -> np.ndarray:
    missing = batch_ndim - (coeffs.ndim - 1)
    if missing > 0:
        coeffs = coeffs.reshape(coeffs.shape[:1] + (1,) * missing + coeffs.shape[1:])
    return coeffs


def _align(a: np.ndarray, b: np.ndarray):
    """Pad batch axes so coefficient arrays broadcast batch-to-batch."""
    if a.ndim < b.ndim:
        a = a.reshape(a.shape[:1] + (1,) * (b.ndim - a.ndim) + a.shape[1:])
    elif b.ndim < a.ndim:
        b = b.reshape(b.shape[:1] + (1,) * (a.ndim - b.ndim) + b.shape[1:])
    return a, b


# ---------------------------------------------------------------------------
# jets


class Jet:
    """Truncated Taylor polynomial in ``dim`` variables up to total ``degree``.

    ``coeffs[0]`` is the value, ``coeffs[unit_i]`` the first partials, and so
    on. Instances are immutable by convention; every operation returns a new
    jet.
    """

    __slots__ = ("coeffs", "dim", "degree", "seed_axis")
    __array_priority__ = 1000

    def __init__(self, coeffs, dim: int, degree: int, seed_axis: int | None = None):
        self.coeffs = coeffs
        self.dim = dim
        self.degree = degree
        self.seed_axis = seed_axis

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, degree: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((n_monomials(dim, degree),) + value.shape)
        coeffs[0] = value
        return cls(coeffs, dim, degree)

    @classmethod
    def monomial(cls, alpha: Sequence[int], degree: int, batch_shape=()) -> "Jet":
        """The pure monomial ``delta^alpha`` (zero at the base point)."""
        dim = len(alpha)
        coeffs = np.zeros((n_monomials(dim, degree),) + tuple(batch_shape))
        if sum(alpha) <= degree:
            coeffs[_index(dim, degree)[tuple(alpha)]] = 1.0
        return cls(coeffs, dim, degree)

    # views --------------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    def linear_part(self) -> np.ndarray:
        """First partial derivatives, shape ``(*batch, dim)``."""
        if self.degree < 1:
            raise InsufficientDegree("jet carries no first-order information")
        idx = list(_unit_index(self.dim, self.degree))
        return np.moveaxis(self.coeffs[idx], 0, -1)

    def truncate(self, degree: int) -> "Jet":
        if degree >= self.degree:
            return self
        if degree < 0:
            raise InsufficientDegree("cannot truncate below degree 0")
        return Jet(self.coeffs[: n_monomials(self.dim, degree)], self.dim, degree)

    def diff(self, axis: int) -> "Jet":
        """Exact partial derivative along ``axis``; lowers the degree by one."""
        if self.degree < 1:
            raise InsufficientDegree("differentiating a degree-0 jet")
        src, fac = _diff_table(self.dim, self.degree, axis)
        fac = fac.reshape((-1,) + (1,) * (self.coeffs.ndim - 1))
        return Jet(self.coeffs[src] * fac, self.dim, self.degree - 1)

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, degree={self.degree}, batch={self.batch_shape})"

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError(f"jet dimension mismatch: {self.dim} vs {other.dim}")
            return other
        return None

    @staticmethod
    def _const_coeffs(c):
        return np.asarray(c, dtype=float)

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            c = np.asarray(other, dtype=float)
            coeffs = _pad(self.coeffs, c.ndim)
            batch = np.broadcast_shapes(coeffs.shape[1:], c.shape)
            coeffs = np.array(np.broadcast_to(coeffs, coeffs.shape[:1] + batch))
            coeffs[0] = coeffs[0] + c
            return Jet(coeffs, self.dim, self.degree)
        deg = min(self.degree, o.degree)
        a, b = _align(self.truncate(deg).coeffs, o.truncate(deg).coeffs)
        return Jet(a + b, self.dim, deg)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.dim, self.degree)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            c = self._const_coeffs(other)
            return Jet(_pad(self.coeffs, c.ndim) * c, self.dim, self.degree)
        deg = min(self.degree, o.degree)
        a, b = _align(self.truncate(deg).coeffs, o.truncate(deg).coeffs)
        if deg == 0:
            return Jet(a * b, self.dim, 0)
        ii, jj, starts = _mul_table(self.dim, deg)
        prod = a[ii] * b[jj]
        return Jet(np.add.reduceat(prod, starts, axis=0), self.dim, deg)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            c = self._const_coeffs(other)
            return Jet(_pad(self.coeffs, c.ndim) / c, self.dim, self.degree)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)) and exponent >= 0:
            result = Jet.constant(np.ones(self.batch_shape), self.dim, self.degree)
            base = self
            e = int(exponent)
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        p = float(exponent)
        c = self.value

        def deriv(k):
            coef = 1.0
            for j in range(k):
                coef *= p - j
            return coef * c ** (p - k)

        return self._compose([deriv(k) for k in range(self.degree + 1)])

    # univariate functions ----------------------------------------------
    def _compose(self, derivs: Sequence) -> "Jet":
        """f(self) given f^(k)(value) for k = 0..degree (Horner in the offset)."""
        n = self.degree
        offset = Jet(self.coeffs.copy(), self.dim, n)
        offset.coeffs[0] = 0.0
        result = Jet.constant(np.asarray(derivs[n]) / math.factorial(n), self.dim, n)
        for k in range(n - 1, -1, -1):
            result = result * offset + np.asarray(derivs[k]) / math.factorial(k)
        return result

    def reciprocal(self) -> "Jet":
        c = self.value
        return self._compose([(-1.0) ** k * math.factorial(k) / c ** (k + 1) for k in range(self.degree + 1)])

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._compose([e] * (self.degree + 1))

    def log(self) -> "Jet":
        c = self.value
        derivs = [np.log(c)] + [(-1.0) ** (k - 1) * math.factorial(k - 1) / c**k for k in range(1, self.degree + 1)]
        return self._compose(derivs)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [s, c, -s, -c]
        return self._compose([cycle[k % 4] for k in range(self.degree + 1)])

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [c, -s, -c, s]
        return self._compose([cycle[k % 4] for k in range(self.degree + 1)])

    def tanh(self) -> "Jet":
        t = np.tanh(self.value)
        derivs = [np.polynomial.polynomial.polyval(t, _tanh_poly(k)) for k in range(self.degree + 1)]
        return self._compose(derivs)

    def sqrt(self) -> "Jet":
        return self**0.5

    # numpy interoperability ------------------------------------------------
    _UNARY = {
        np.negative: "__neg__",
        np.positive: "__pos__",
        np.exp: "exp",
        np.log: "log",
        np.sin: "sin",
        np.cos: "cos",
        np.tanh: "tanh",
        np.sqrt: "sqrt",
    }
    _BINARY = {
        np.add: lambda a, b: a + b,
        np.subtract: lambda a, b: a - b,
        np.multiply: lambda a, b: a * b,
        np.true_divide: lambda a, b: a / b,
        np.power: lambda a, b: a**b,
    }

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if len(inputs) == 1 and ufunc in self._UNARY:
            return getattr(inputs[0], self._UNARY[ufunc])()
        if ufunc is np.square:
            return inputs[0] * inputs[0]
        if len(inputs) == 2 and ufunc in self._BINARY:
            a, b = inputs
            if not isinstance(a, Jet):
                # scalar/array on the left
                if ufunc is np.subtract:
                    return (-b) + a
                if ufunc is np.true_divide:
                    return b.reciprocal() * a
                if ufunc is np.power:
                    return NotImplemented
                return self._BINARY[ufunc](b, a)
            return self._BINARY[ufunc](a, b)
        return NotImplemented


def variables(x, degree: int) -> list[Jet]:
    """Seed jets ``x_i + delta_i`` for a point or a batch of points.

    ``x`` has shape ``(d,)`` or ``(*batch, d)``; each returned jet has batch
    shape ``x.shape[:-1]``.
    """
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    batch = x.shape[:-1]
    n = n_monomials(dim, degree)
    units = _unit_index(dim, degree) if degree >= 1 else None
    out = []
    for i in range(dim):
        coeffs = np.zeros((n,) + batch)
        coeffs[0] = x[..., i]
        if units is not None:
            coeffs[units[i]] = 1.0
        out.append(Jet(coeffs, dim, degree, seed_axis=i))
    return out


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class SmoothScalarField:
    """A scalar function of the state that can be evaluated on jets.

    ``fn`` receives the state as a sequence of ``dim`` components. Components
    are plain floats/arrays or :class:`Jet` instances; the function must use
    only operations both support (arithmetic and numpy ufuncs such as
    ``np.tanh``). ``depth`` is the number of derivative orders ``fn`` consumes
    internally, or ``None`` when it must be discovered on first evaluation.
    """

    fn: Callable
    dim: int
    depth: int | None = 0
    max_depth: int = DEFAULT_MAX_DEPTH

    def __call__(self, x):
        return evaluate(self, x)

    def on_jets(self, xs: Sequence[Jet]) -> Jet:
        """Evaluate on seed jets, always returning a jet."""
        out = self.fn(xs)
        if not isinstance(out, Jet):
            ref = xs[0]
            out = Jet.constant(np.broadcast_to(np.asarray(out, dtype=float), ref.batch_shape), ref.dim, ref.degree)
        return out


def field(fn: Callable, dim: int, depth: int | None = 0, max_depth: int = DEFAULT_MAX_DEPTH) -> SmoothScalarField:
    return SmoothScalarField(fn, dim, depth, max_depth)


def nest(f, dim: int | None = None, max_depth: int | None = None) -> SmoothScalarField:
    """Wrap ``f`` so that its evaluation may call :func:`gradient`/:func:`hessian`.

    ``f`` is a callable on state components or an existing field. The nesting
    depth is discovered by evaluation, escalating the jet degree until the
    field evaluates; exhausting ``max_depth`` raises
    :class:`DepthExceededError`.
    """
    if isinstance(f, SmoothScalarField):
        return SmoothScalarField(f.fn, f.dim, None, f.max_depth if max_depth is None else max_depth)
    if dim is None:
        raise ValueError("dim is required when nesting a bare callable")
    return SmoothScalarField(f, dim, None, DEFAULT_MAX_DEPTH if max_depth is None else max_depth)


def _as_field(f, dim: int) -> SmoothScalarField:
    if isinstance(f, SmoothScalarField):
        return f
    return SmoothScalarField(f, dim, None)


def _check_point(f: SmoothScalarField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != f.dim:
        raise ValueError(f"expected a point of dimension {f.dim}, got shape {x.shape}")
    return x


def _jet_of(f: SmoothScalarField, x: np.ndarray, extra: int) -> Jet:
    """Evaluate ``f`` at seeded jets with ``extra`` spare derivative orders."""
    start = (f.depth or 0) + extra
    for degree in range(start, f.max_depth + 1):
        try:
            out = f.on_jets(variables(x, degree))
        except InsufficientDegree:
            continue
        if out.degree < extra:
            continue
        if not np.all(np.isfinite(out.coeffs[: n_monomials(f.dim, extra)])):
            raise FloatingPointError("field evaluation produced non-finite values")
        return out
    raise DepthExceededError(
        f"field needs more than max_depth={f.max_depth} derivative orders "
        f"(requested {extra} on top of its internal depth)"
    )


def _check_seeds(xs: Sequence[Jet], dim: int) -> None:
    if len(xs) != dim:
        raise ValueError(f"expected {dim} state components, got {len(xs)}")
    for i, xj in enumerate(xs):
        if not isinstance(xj, Jet) or xj.seed_axis != i:
            raise ValueError("nested differentiation requires the seeded state jets as argument")


def _is_jet_state(x) -> bool:
    return isinstance(x, (list, tuple)) and len(x) > 0 and isinstance(x[0], Jet)


def evaluate(f, x):
    """Value of ``f`` at a point (or batch of points, last axis = state)."""
    if _is_jet_state(x):
        return f.on_jets(x) if isinstance(f, SmoothScalarField) else f(x)
    f = _as_field(f, np.shape(x)[-1])
    x = _check_point(f, x)
    if f.depth == 0:
        out = f.fn([x[..., i] for i in range(f.dim)])
        out = np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("field evaluation produced non-finite values")
        return out
    return _jet_of(f, x, 0).value.copy()


def gradient(f, x):
    """Exact gradient of a scalar field.

    With a plain point ``x`` of shape ``(d,)`` or ``(*batch, d)`` this returns
    an array of the same shape. Inside a nested field, where ``x`` is the list
    of seeded state jets, it returns the list of partial-derivative jets.
    """
    if _is_jet_state(x):
        f = _as_field(f, len(x))
        _check_seeds(x, f.dim)
        out = f.on_jets(x)
        return [out.diff(i) for i in range(f.dim)]
    f = _as_field(f, np.shape(x)[-1])
    x = _check_point(f, x)
    return _jet_of(f, x, 1).linear_part().copy()


def hessian(f, x):
    """Exact, exactly symmetric Hessian of a scalar field (see :func:`gradient`)."""
    if _is_jet_state(x):
        f = _as_field(f, len(x))
        _check_seeds(x, f.dim)
        out = f.on_jets(x)
        firsts = [out.diff(i) for i in range(f.dim)]
        rows = [[None] * f.dim for _ in range(f.dim)]
        for i in range(f.dim):
            for j in range(i, f.dim):
                rows[i][j] = rows[j][i] = firsts[i].diff(j)
        return rows
    f = _as_field(f, np.shape(x)[-1])
    x = _check_point(f, x)
    jet = _jet_of(f, x, 2)
    dim = f.dim
    index = _index(dim, jet.degree)
    H = np.empty(x.shape[:-1] + (dim, dim))
    for i in range(dim):
        for j in range(dim):
            alpha = [0] * dim
            alpha[i] += 1
            alpha[j] += 1
            c = jet.coeffs[index[tuple(alpha)]]
            H[..., i, j] = 2.0 * c if i == j else c
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def jacobian(fn: Callable, x, dim_out: int | None = None) -> np.ndarray:
    """Jacobian of a vector function given on state components.

    ``fn`` maps the component sequence to a sequence of outputs; returns an
    array of shape ``(*batch, n_out, d)``.
    """
    return value_and_jacobian(fn, x)[1]


def value_and_jacobian(fn: Callable, x) -> tuple[np.ndarray, np.ndarray]:
    """``fn(x)`` with shape ``(*batch, n_out)`` and its Jacobian from one pass."""
    x = np.asarray(x, dtype=float)
    xs = variables(x, 1)
    values, rows = [], []
    for o in fn(xs):
        if isinstance(o, Jet):
            values.append(o.value)
            rows.append(o.linear_part())
        else:
            values.append(np.broadcast_to(np.asarray(o, dtype=float), x.shape[:-1]))
            rows.append(np.zeros(x.shape))
    return np.stack(values, axis=-1), np.stack(rows, axis=-2)
