import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import kalman_rts, tme2_linear_transition
from tmesmooth import ExtendedSmoother, SigmaPointSmoother
from tmesmooth.simulate import simulate_experiment
from tmesmooth.validation import check_data, check_spd, check_symmetric_psd, check_times, check_vector


@pytest.fixture
def linear_problem(linear_config):
    cfg = linear_config
    rec = simulate_experiment(cfg, 0)
    return cfg, cfg.build_model(), cfg.build_measurement(), rec


def test_params_roundtrip_and_clone(linear_problem):
    cfg, model, meas, _ = linear_problem
    est = SigmaPointSmoother(model, meas, scheme="tme-3", rule="cubature", dt=0.1)
    params = est.get_params()
    assert params["scheme"] == "tme-3" and params["rule"] == "cubature"
    twin = clone(est)
    assert twin.get_params()["dt"] == 0.1 and twin is not est
    est.set_params(scheme="em")
    assert est.scheme == "em"
    assert "n_sub" in ExtendedSmoother().get_params()


def test_fit_predict_matches_rts_oracle(linear_problem, linear_F):
    cfg, model, meas, rec = linear_problem
    est = SigmaPointSmoother(model, meas, scheme="tme-2", dt=cfg.dt).fit(rec.data)
    A, Q = tme2_linear_transition(linear_F, cfg.sigma * np.eye(2), cfg.dt)
    _, _, ms, Ps = kalman_rts(A, Q, np.array([[1.0, 0.0]]), np.array([[cfg.meas_noise]]),
                              np.zeros(2), np.eye(2), rec.data)
    np.testing.assert_allclose(est.predict(), ms[1:], atol=1e-8)
    np.testing.assert_allclose(est.covs_, Ps, atol=1e-8)
    assert est.n_features_in_ == 1
    np.testing.assert_allclose(est.times_[1:], cfg.dt * np.arange(1, cfg.T + 1))
    # predict on new data refits nothing but reruns the smoother
    np.testing.assert_allclose(est.predict(rec.data[:, 0]), ms[1:], atol=1e-8)
    score = est.score(rec.data, rec.truth.states[1:])
    assert score < 0 and score == pytest.approx(-np.sqrt(np.mean((ms[1:] - rec.truth.states[1:]) ** 2)))


def test_foreign_filter_scheme_and_explicit_times(linear_problem):
    cfg, model, meas, rec = linear_problem
    times = cfg.dt * np.arange(1, cfg.T + 1)
    a = SigmaPointSmoother(model, meas, scheme="linear", filter_scheme="tme-3").fit(rec.data, times)
    b = SigmaPointSmoother(model, meas, scheme="linear", dt=cfg.dt).fit(rec.data)
    assert a.filter_result_.method == "spf-tme-3"
    np.testing.assert_allclose(a.predict(), b.predict(), atol=1e-3)


def test_extended_smoother_runs(linear_problem):
    cfg, model, meas, rec = linear_problem
    est = ExtendedSmoother(model, meas, n_sub=20, dt=cfg.dt).fit(rec.data)
    ref = SigmaPointSmoother(model, meas, scheme="linear", dt=cfg.dt).fit(rec.data)
    np.testing.assert_allclose(est.predict(), ref.predict(), atol=0.05)


def test_estimator_errors(linear_problem):
    cfg, model, meas, rec = linear_problem
    with pytest.raises(NotFittedError):
        SigmaPointSmoother(model, meas, dt=0.1).predict()
    with pytest.raises(ValueError):
        SigmaPointSmoother(model, meas).fit(rec.data)
    with pytest.raises(ValueError):
        SigmaPointSmoother(model, meas, dt=0.1).fit(np.zeros((5, 2)))
    with pytest.raises(ValueError):
        SigmaPointSmoother(model, meas).fit(rec.data, times=[0.1, 0.2])
    with pytest.raises(TypeError):
        SigmaPointSmoother("lorenz", meas, dt=0.1).fit(rec.data)


def test_validation_helpers():
    np.testing.assert_array_equal(check_vector([1, 2], 2), [1.0, 2.0])
    with pytest.raises(ValueError):
        check_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        check_vector([1.0], 2)
    check_symmetric_psd(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        check_symmetric_psd([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        check_spd(np.zeros((2, 2)))
    np.testing.assert_array_equal(check_times([0.1, 0.2]), [0.1, 0.2])
    with pytest.raises(ValueError):
        check_times([0.2, 0.1])
    assert check_data([1.0, 2.0], 2, 1).shape == (2, 1)
    with pytest.raises(ValueError):
        check_data(np.zeros((3, 1)), 2, 1)
