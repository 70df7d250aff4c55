import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmesmooth.differentiation import (
    Jet,
    field,
    gradient,
    hessian,
    jacobian,
    nest,
    value_and_jacobian,
    variables,
)
from tmesmooth.exceptions import DepthExceededError
from tmesmooth.models import make_benes, make_lorenz63, make_ou


def fd_gradient(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f, x, h=1e-4):
    d = x.size
    H = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def test_square_gradient_and_hessian():
    f = field(lambda x: x[0] ** 2, 1)
    assert gradient(f, [3.0]) == pytest.approx([6.0])
    np.testing.assert_allclose(hessian(f, [-1.7]), [[2.0]])


def test_tanh_gradient_at_zero():
    f = field(lambda x: np.tanh(x[0]), 1)
    assert gradient(f, [0.0]) == pytest.approx([1.0])


def test_product_hessian():
    f = field(lambda x: x[0] * x[1], 2)
    np.testing.assert_array_equal(hessian(f, [1.0, 1.0]), [[0.0, 1.0], [1.0, 0.0]])


def test_tanh_hessian_matches_finite_differences():
    f = field(lambda x: np.tanh(x[0]), 1)
    x = np.array([0.5])
    H = hessian(f, x)
    H_fd = fd_hessian(lambda z: np.tanh(z[0]), x)
    assert abs(H[0, 0] - H_fd[0, 0]) / abs(H_fd[0, 0]) < 1e-5


@pytest.mark.parametrize("make", [make_lorenz63, lambda: make_ou(1.3, 0.7), make_benes])
def test_builtin_drifts_match_finite_differences(make):
    model = make()
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.uniform(-3, 3, size=model.dim)
        for i in range(model.dim):
            f = field(lambda z, i=i: model.drift(z)[i], model.dim)
            plain = lambda z, i=i: float(model.drift_at(z)[i])
            g = gradient(f, x)
            g_fd = fd_gradient(plain, x)
            np.testing.assert_allclose(g, g_fd, rtol=1e-5, atol=1e-7)
            H = hessian(f, x)
            np.testing.assert_allclose(H, fd_hessian(plain, x), rtol=1e-3, atol=1e-5)


def test_lorenz_second_component_gradient():
    model = make_lorenz63()
    f = field(lambda z: model.drift(z)[1], 3)
    x = np.random.default_rng(3).normal(size=3) * 5
    g = gradient(f, x)
    g_fd = fd_gradient(lambda z: float(model.drift_at(z)[1]), x)
    assert np.max(np.abs(g - g_fd) / np.maximum(1.0, np.abs(g_fd))) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_hessian_exactly_symmetric(x):
    f = field(lambda z: np.sin(z[0] * z[1]) + z[2] * np.exp(z[0]) * z[1] ** 2, 3)
    H = hessian(f, np.array(x))
    np.testing.assert_array_equal(H, H.T)


def test_batched_gradient_matches_pointwise():
    f = field(lambda z: z[0] ** 3 * z[1] - np.cos(z[1]), 2)
    X = np.random.default_rng(1).normal(size=(4, 5, 2))
    G = gradient(f, X)
    assert G.shape == X.shape
    for idx in np.ndindex(4, 5):
        np.testing.assert_allclose(G[idx], gradient(f, X[idx]), rtol=0, atol=0)


def test_nest_linear_example():
    # g(x) = f'(x) x with f(x) = x, so grad g = 1
    f = field(lambda z: z[0], 1)
    g = nest(lambda z: gradient(f, z)[0] * z[0], dim=1)
    assert gradient(g, [2.5]) == pytest.approx([1.0])


def test_nest_ou_example():
    theta = 0.8
    a = field(lambda z: -theta * z[0], 1)
    h = nest(lambda z: gradient(a, z)[0] * a.on_jets(z), dim=1)
    assert h([1.5]) == pytest.approx(theta**2 * 1.5)
    assert gradient(h, [1.5]) == pytest.approx([theta**2])


def test_nest_benes_second_iterate_vanishes():
    a = field(lambda z: np.tanh(z[0]), 1)

    def h(z):
        return gradient(a, z)[0] * a.on_jets(z) + 0.5 * hessian(a, z)[0][0]

    hn = nest(h, dim=1)
    xs = np.linspace(-3, 3, 13)
    for x in xs:
        assert abs(hn([x])) < 1e-15
        assert abs(gradient(hn, [x])[0]) < 1e-14


def test_depth_four_polynomial_closed_form():
    # four nested derivatives of x^6 y^2 in x give 360 x^2 y^2
    p = field(lambda z: z[0] ** 6 * z[1] ** 2, 2)
    d1 = nest(lambda z: gradient(p, z)[0], dim=2)
    d2 = nest(lambda z: gradient(d1, z)[0], dim=2)
    d3 = nest(lambda z: gradient(d2, z)[0], dim=2)
    d4 = nest(lambda z: gradient(d3, z)[0], dim=2)
    x = np.array([1.3, -0.7])
    expected = 360 * x[0] ** 2 * x[1] ** 2
    assert abs(d4(x) - expected) / expected < 1e-12


def test_depth_exceeded_is_raised():
    f = field(lambda z: z[0] ** 3, 1)
    g = nest(lambda z: hessian(f, z)[0][0], dim=1, max_depth=2)
    h = nest(lambda z: hessian(g, z)[0][0], dim=1, max_depth=2)
    with pytest.raises(DepthExceededError):
        h([1.0])


def test_dimension_mismatch_rejected():
    f = field(lambda z: z[0] * z[1], 2)
    with pytest.raises(ValueError):
        gradient(f, [1.0, 2.0, 3.0])


def test_nan_surfaces_as_evaluation_failure():
    f = field(lambda z: np.log(z[0]), 1)
    with pytest.raises(FloatingPointError):
        with np.errstate(invalid="ignore", divide="ignore"):
            gradient(f, [-1.0])


def test_evaluation_is_deterministic():
    f = field(lambda z: np.exp(z[0]) * np.sin(z[1]), 2)
    x = np.array([0.3, 1.1])
    a, b = hessian(f, x), hessian(f, x)
    assert a.tobytes() == b.tobytes()


def test_jet_arithmetic_matches_series():
    (x,) = variables(np.array([0.4]), 5)
    for jet, fn, derivs in [
        (np.exp(x), np.exp, [np.exp(0.4)] * 6),
        (np.sin(x), np.sin, [np.sin(0.4), np.cos(0.4), -np.sin(0.4), -np.cos(0.4), np.sin(0.4), np.cos(0.4)]),
        (1.0 / (1.0 + x), None, [(-1) ** k * np.prod(range(1, k + 1)) / 1.4 ** (k + 1) for k in range(6)]),
    ]:
        taylor = [derivs[k] / np.prod(range(1, k + 1)) for k in range(6)]
        np.testing.assert_allclose(jet.coeffs, taylor, rtol=1e-12)


def test_jet_power_and_sqrt():
    (x,) = variables(np.array([2.0]), 3)
    np.testing.assert_allclose((x**3).coeffs, [8.0, 12.0, 6.0, 1.0])
    s = np.sqrt(x)
    np.testing.assert_allclose((s * s).coeffs, x.coeffs, atol=1e-14)


def test_jacobian_of_lorenz():
    model = make_lorenz63()
    x = np.array([1.0, 2.0, 3.0])
    J = jacobian(model.drift, x)
    expected = np.array([[-10.0, 10.0, 0.0], [28.0 - 3.0, -1.0, -1.0], [2.0, 1.0, -2.0]])
    np.testing.assert_array_equal(J, expected)
    val, J2 = value_and_jacobian(model.drift, x)
    np.testing.assert_array_equal(val, model.drift_at(x))
    np.testing.assert_array_equal(J2, expected)


def test_jet_constant_and_monomial():
    c = Jet.constant(2.0, 2, 2)
    m = Jet.monomial((1, 1), 2)
    prod = c * m
    assert prod.degree == 2
    assert prod.coeffs.sum() == pytest.approx(2.0)
