"""Shared fixtures and independent oracles.

The Kalman/RTS oracle below is a textbook implementation with explicit
inverses, written without any library code so that it can check the
sigma-point recursions independently.
"""
import numpy as np
import pytest

from tmesmooth.config import LINEAR_FIXTURE_F, ExperimentConfig


def kalman_rts(A, Q, H, R, m0, P0, ys):
    """Discrete Kalman filter and RTS smoother for x' = A x + q, y = H x + r."""
    T = len(ys)
    d = m0.shape[0]
    mf = np.zeros((T + 1, d))
    Pf = np.zeros((T + 1, d, d))
    mp = np.zeros((T + 1, d))
    Pp = np.zeros((T + 1, d, d))
    mf[0], Pf[0] = m0, P0
    for k in range(1, T + 1):
        mp[k] = A @ mf[k - 1]
        Pp[k] = A @ Pf[k - 1] @ A.T + Q
        S = H @ Pp[k] @ H.T + R
        K = Pp[k] @ H.T @ np.linalg.inv(S)
        mf[k] = mp[k] + K @ (ys[k - 1] - H @ mp[k])
        Pf[k] = Pp[k] - K @ S @ K.T
    ms, Ps = mf.copy(), Pf.copy()
    for k in range(T - 1, -1, -1):
        G = Pf[k] @ A.T @ np.linalg.inv(Pp[k + 1])
        ms[k] = mf[k] + G @ (ms[k + 1] - mp[k + 1])
        Ps[k] = Pf[k] + G @ (Ps[k + 1] - Pp[k + 1]) @ G.T
    return mf, Pf, ms, Ps


def tme2_linear_transition(F, L, dt):
    """Second-order truncations of the linear SDE transition moments."""
    d = F.shape[0]
    LL = L @ L.T
    A = np.eye(d) + F * dt + F @ F * dt**2 / 2
    Q = LL * dt + (F @ LL + LL @ F.T) * dt**2 / 2
    return A, Q


@pytest.fixture
def linear_config():
    return ExperimentConfig(seed=11, model="linear", sigma=1.0, T=50, dt=0.1, n_sub=20, meas_noise=0.5)


@pytest.fixture
def linear_F():
    return np.array(LINEAR_FIXTURE_F)
