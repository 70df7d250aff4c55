import numpy as np
import pytest

from tmesmooth.config import ExperimentConfig
from tmesmooth.exceptions import ConditionViolatedError, RunFailedError
from tmesmooth.methods import build_pipeline
from tmesmooth.models import DiffusionModel, make_benes, make_lorenz63
from tmesmooth.quadrature import cubature_rule, gauss_hermite_rule
from tmesmooth.simulate import simulate_experiment
from tmesmooth.stability import (
    StabilityConstants,
    bound_from_gain,
    empirical_constants,
    gain_constant,
    mc_error_estimate,
    theoretical_bound,
)


def consts(**kw):
    base = dict(c_f=1.0, c_P=1.0, c_g=1.0, c_S=0.0, c_Q=2.0, c_bar=2.0, c_chi=1.0)
    base.update(kw)
    return StabilityConstants(**base)


def test_gain_constant_examples():
    assert gain_constant(consts()) == (0.25, True)
    c_G, ok = gain_constant(consts(c_S=1.0, c_Q=1.0))
    assert c_G == 2.0 and not ok
    small, _ = gain_constant(consts(c_Q=1e8))
    assert small < 1e-15


def test_bound_hand_example():
    c = consts()
    assert theoretical_bound(c, 10, 7) == 6.25
    assert bound_from_gain(1.0, 0.25, 2.0, 10, 7) == 6.25


def test_bound_cases():
    c = consts(c_f=lambda k: float(k))
    assert theoretical_bound(c, 10, 10) == 10.0
    assert theoretical_bound(c, 10, 9) == pytest.approx(2 * (9 + 0.25 * 2))
    assert bound_from_gain(lambda k: 3.0, 0.0, 5.0, 10, 2) == 6.0
    for k in (0, 11):
        with pytest.raises(ValueError):
            theoretical_bound(c, 10, k)


def test_condition_violated_only_below_last_two_steps():
    c = consts(c_S=1.0, c_Q=1.0)
    with pytest.raises(ConditionViolatedError):
        theoretical_bound(c, 10, 8)
    assert theoretical_bound(c, 10, 9) == pytest.approx(2 * (1 + 2 * 2))
    assert theoretical_bound(c, 10, 10) == 1.0
    with pytest.raises(ConditionViolatedError):
        bound_from_gain(1.0, 0.5, 1.0, 5, 1)


def test_bound_monotone_in_c_bar_and_c_G():
    T, k = 20, 5
    gains = np.linspace(0.0, 0.49, 50)
    vals = [bound_from_gain(1.0, g, 2.0, T, k) for g in gains]
    assert np.all(np.diff(vals) >= 0)
    bars = np.linspace(0.0, 10.0, 50)
    vals = [bound_from_gain(1.0, 0.3, b, T, k) for b in bars]
    assert np.all(np.diff(vals) >= 0)
    near = [bound_from_gain(1.0, g, 2.0, T, k) for g in (1e-3, 1e-6, 1e-9)]
    assert abs(near[-1] - 2.0) < 1e-7 and near[0] > near[1] > near[2]


def test_constants_validation():
    with pytest.raises(ValueError):
        consts(c_Q=0.0)
    with pytest.raises(ValueError):
        consts(c_P=-1.0)
    assert consts(c_S=0.0, c_bar=0.0).c_S == 0.0


def test_empirical_constants_examples():
    e = empirical_constants(make_benes(), gauss_hermite_rule(1, 3), 1, 0.1, n_samples=200)
    assert e.c_Q == pytest.approx(0.1, rel=1e-14)
    assert e.c_chi == pytest.approx(1 / 3)
    assert set(e.estimated) == {"c_Q", "c_g", "c_chi"}
    lor = empirical_constants(make_lorenz63(), cubature_rule(3), 1, 0.02, n_samples=200)
    assert lor.c_Q == pytest.approx(0.5, rel=1e-12)
    const = DiffusionModel(2, 2, lambda x: [1.0 + 0.0 * x[0], -2.0 + 0.0 * x[1]],
                           lambda x: [[1.0, 0.0], [0.0, 1.0]], constant_dispersion=True)
    for M in (1, 2, 3):
        e = empirical_constants(const, cubature_rule(2), M, 0.5, n_samples=50)
        assert e.c_g == pytest.approx(1.0, abs=1e-14)


def test_empirical_constants_reproducible():
    a = empirical_constants(make_lorenz63(), cubature_rule(3), 2, 0.02, n_samples=100, seed=4)
    b = empirical_constants(make_lorenz63(), cubature_rule(3), 2, 0.02, n_samples=100, seed=4)
    assert (a.c_Q, a.c_g) == (b.c_Q, b.c_g)


def test_mc_two_runs_deterministic():
    cfg = ExperimentConfig(seed=3, T=15, n_sub=20)
    a = mc_error_estimate(cfg, 2)
    b = mc_error_estimate(cfg, 2)
    assert a.mean.tobytes() == b.mean.tobytes()
    assert a.ci_low.tobytes() == b.ci_low.tobytes()
    assert a.k.tolist() == list(range(1, 16))
    np.testing.assert_allclose(a.half_width, (a.ci_high - a.mean))
    with pytest.raises(ValueError):
        mc_error_estimate(cfg, 1)
    with pytest.raises(ValueError):
        mc_error_estimate(ExperimentConfig(T=3, n_sub=2), 2)


def test_failed_run_carries_seed_and_index():
    cfg = ExperimentConfig(seed=8, T=10, n_sub=2, dt=1.0)
    with pytest.raises(RunFailedError) as info:
        with np.errstate(all="ignore"):
            mc_error_estimate(cfg, 2)
    assert info.value.seed == 8 and info.value.index == 0
    assert "seed 8" in str(info.value)


@pytest.mark.slow
def test_linear_fixture_coverage_of_posterior_trace():
    cfg = ExperimentConfig(seed=21, model="linear", sigma=1.0, T=50, dt=0.1, n_sub=200, meas_noise=0.5,
                           filter="ghf-linear", smoother="ghs-linear")
    curve = mc_error_estimate(cfg, 500)
    # for a linear Gaussian model the smoother covariance does not depend on the data
    pipe = build_pipeline(cfg)
    rec = simulate_experiment(cfg, 0)
    sr = pipe.smoother("ghs-linear")(pipe.filter("ghf-linear", rec.data))
    trace = np.trace(sr.covs[1:], axis1=1, axis2=2)
    inside = (curve.ci_low <= trace) & (trace <= curve.ci_high)
    assert inside.mean() >= 0.9
