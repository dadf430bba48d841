"""Data-aided linearized Kalman filter over the (N+1)-dimensional state.

The measurement ``y = x e^{j phi} + w`` is treated as a real 2-vector and
linearized around the predicted phase; only the phase column of the
Jacobian is non-zero. The complex noise of variance 1/snr contributes
1/(2 snr) to each quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gaussian import GaussianNd, process_cov, propagate
from .model import ArmaSpec, ChannelParams, Trace, stationary_register_cov, transition_matrix, wrap_angle

INIT_PHASE_VAR = 1e-4

__all__ = ["EkfState", "EkfRun", "init", "predict", "update", "run_ekf"]


@dataclass(frozen=True)
class EkfState:
    """Gaussian moments of the state and the number of measurements absorbed."""

    moments: GaussianNd
    k: int = 0


def initial_moments(spec: ArmaSpec, known_phi1: float, phase_var: float = INIT_PHASE_VAR):
    d = spec.dim
    cov = np.zeros((d, d))
    cov[0, 0] = phase_var
    cov[1:, 1:] = stationary_register_cov(spec)
    mean = np.zeros(d)
    mean[0] = wrap_angle(known_phi1)
    return mean, cov


def init(spec: ArmaSpec, known_phi1: float, phase_var: float = INIT_PHASE_VAR) -> EkfState:
    """Prior on the first state: phase known to ``phase_var``, register stationary."""
    mean, cov = initial_moments(spec, known_phi1, phase_var)
    return EkfState(GaussianNd(mean, cov), 0)


def predict(e: EkfState, spec: ArmaSpec) -> EkfState:
    g = propagate(e.moments, transition_matrix(spec), process_cov(spec.gamma, spec.dim))
    mean = g.mean.copy()
    mean[0] = wrap_angle(mean[0])
    return EkfState(GaussianNd(mean, g.cov), e.k)


def update(e: EkfState, y: complex, x: complex, channel: ChannelParams,
           form: str = "joseph") -> EkfState:
    """Absorb one observation with known symbol ``x``.

    ``form`` selects the Joseph (default) or the standard ``(I - KH) P``
    covariance update.
    """
    if x == 0:
        raise ValueError("data-aided update needs a non-zero symbol")
    mean = e.moments.mean
    P = e.moments.cov
    d = mean.size
    h = x * complex(math.cos(mean[0]), math.sin(mean[0]))
    H = np.zeros((2, d))
    H[:, 0] = (-h.imag, h.real)
    R = np.eye(2) * (0.5 / channel.snr)
    r = np.array([y.real - h.real, y.imag - h.imag])
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    new_mean = mean + K @ r
    new_mean[0] = wrap_angle(new_mean[0])
    A = np.eye(d) - K @ H
    if form == "joseph":
        cov = A @ P @ A.T + K @ R @ K.T
    elif form == "standard":
        cov = A @ P
    else:
        raise ValueError(f"unknown update form {form!r}")
    return EkfState(GaussianNd(new_mean, cov), e.k + 1)


@dataclass(frozen=True)
class EkfRun:
    """Per-step output of :func:`run_ekf` for a whole trace.

    ``pred_phi``/``pred_var`` are the predictive phase moments before
    observing ``y[k]``; ``post_mean``/``post_cov`` the posterior after it.
    """

    pred_phi: np.ndarray
    pred_var: np.ndarray
    post_mean: np.ndarray
    post_cov: np.ndarray


def run_ekf(trace: Trace, spec: ArmaSpec, channel: ChannelParams,
            phase_var: float = INIT_PHASE_VAR) -> EkfRun:
    """Filter a trace with the true symbols, starting from the known first phase."""
    n, d = trace.n, spec.dim
    mean0, cov0 = initial_moments(spec, trace.states[0, 0], phase_var)
    out = EkfRun(np.empty(n), np.empty(n), np.empty((n, d)), np.empty((n, d, d)))
    _kernels.ekf_run(mean0, cov0, transition_matrix(spec), process_cov(spec.gamma, d),
                     np.ascontiguousarray(trace.y), np.ascontiguousarray(trace.x),
                     channel.snr, out.pred_phi, out.pred_var, out.post_mean, out.post_cov)
    return out
