"""Bootstrap particle filters, blind and data-aided.

Each step resamples (systematic, when the effective sample size has dropped
below half the particle count), propagates every particle through the state
dynamics with a fresh innovation, and reweights by the channel likelihood.
Resampling is done at the start of a step rather than the end of the
previous one, so a returned :class:`ParticleSet` still carries the full
posterior weights and :func:`posterior_moments` sees them.

Every step consumes exactly ``Np`` standard normals from the move stream and
one uniform from the resampling stream, which keeps :func:`run_pf` and a
loop of :func:`pf_step` calls bit-identical for the same seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import EstimatorError
from .gaussian import GaussianNd
from .model import (ArmaSpec, ChannelParams, Constellation, Trace, make_rng,
                    stationary_register_cov, wrap_angle, _chol_psd)

MIN_RESULTANT = 1e-6

__all__ = ["ParticleSet", "PfRun", "pf_init", "pf_step", "posterior_moments",
           "ess", "systematic_resample", "run_pf"]


@dataclass
class ParticleSet:
    """Weighted particle cloud with its random streams.

    ``log_weights`` are kept with maximum 0; ``k`` counts absorbed
    measurements. The generators are shared with sets derived by
    :func:`pf_step`, which advances them.
    """

    states: np.ndarray
    log_weights: np.ndarray
    k: int
    rng_move: np.random.Generator
    rng_resample: np.random.Generator

    @property
    def Np(self) -> int:
        return self.states.shape[0]

    def weights(self) -> np.ndarray:
        return _kernels.normalized_weights(self.log_weights)


def ess(log_weights) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = _kernels.normalized_weights(np.asarray(log_weights, dtype=float))
    return float(1.0 / np.sum(w * w))


def systematic_resample(weights, u: float) -> np.ndarray:
    """Ancestor indices by systematic resampling with offset ``u`` in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    return _kernels.systematic_indices(w / w.sum(), float(u))


def _streams(seed):
    return make_rng(seed, 0), make_rng(seed, 1), make_rng(seed, 2)


def pf_init(spec: ArmaSpec, known_phi1: float, Np: int, seed: int) -> ParticleSet:
    """Cloud for the first state: exact phase, register from its stationary law."""
    if Np < 2:
        raise ValueError("need at least two particles")
    rng_init, rng_move, rng_res = _streams(seed)
    L = _chol_psd(stationary_register_cov(spec))
    states = np.empty((Np, spec.dim))
    states[:, 0] = wrap_angle(known_phi1)
    states[:, 1:] = rng_init.standard_normal((Np, spec.order)) @ L.T
    return ParticleSet(states, np.zeros(Np), 0, rng_move, rng_res)


def _square_grid_levels(constellation):
    """I and Q levels when the alphabet is a uniform product grid, else empty."""
    pts = constellation.points
    lr = np.unique(np.round(pts.real, 12))
    li = np.unique(np.round(pts.imag, 12))
    M = pts.size
    uniform = np.allclose(constellation.priors, 1.0 / M, rtol=0, atol=1e-15)
    if uniform and lr.size * li.size == M:
        grid = np.sort_complex((lr[None, :] + 1j * li[:, None]).ravel())
        if np.allclose(grid, np.sort_complex(pts), rtol=0, atol=1e-12):
            return lr, li
    return np.zeros(0), np.zeros(0)


def _constellation_arrays(constellation):
    pts = constellation.points
    with np.errstate(divide="ignore"):
        logp = np.log(constellation.priors)
    lr, li = _square_grid_levels(constellation)
    return (np.ascontiguousarray(pts.real), np.ascontiguousarray(pts.imag), logp,
            lr, li)


def pf_step(ps: ParticleSet, y: complex, spec: ArmaSpec, constellation: Constellation,
            channel: ChannelParams, x: complex | None = None):
    """Advance the filter by one observation.

    Blind when ``x`` is None, data-aided otherwise. Returns the new set and
    the log of the predictive likelihood ``p(y_k | y_1..y_{k-1})`` estimated
    with the weights held before this observation.
    """
    states = ps.states.copy()
    logw = ps.log_weights.copy()
    normals = ps.rng_move.standard_normal(ps.Np)
    u = ps.rng_resample.random()
    pr, pi_, logp, lr, li = _constellation_arrays(constellation)
    blind = x is None
    x = 0j if blind else complex(x)
    y = complex(y)
    scratch = _kernels.make_scratch(ps.Np, ps.states.shape[1])
    status, lp = _kernels.pf_step_kernel(states, logw, ps.k, y.real, y.imag, blind,
                                         x.real, x.imag, pr, pi_, logp, lr, li,
                                         channel.snr, spec.a_taps, spec.b_taps,
                                         normals, u, spec.gamma, scratch)
    if status == _kernels.DEPLETED:
        raise EstimatorError("particle depletion", step=ps.k + 1)
    return ParticleSet(states, logw, ps.k + 1, ps.rng_move, ps.rng_resample), lp


def posterior_moments(ps: ParticleSet) -> GaussianNd:
    """Weighted mean and covariance with the phase taken around its circular mean."""
    if ess(ps.log_weights) < 2.0 - 1e-9:
        raise EstimatorError("effective sample size below 2", step=ps.k)
    d = ps.states.shape[1]
    mean = np.empty(d)
    cov = np.empty((d, d))
    R = _kernels.circular_moments(ps.states, ps.log_weights, mean, cov)
    if R < MIN_RESULTANT:
        raise EstimatorError("dispersed phase posterior", step=ps.k)
    return GaussianNd(mean, cov)


@dataclass(frozen=True)
class PfRun:
    """Per-step output of :func:`run_pf`; moments are None unless requested."""

    log_pred_like: np.ndarray
    post_mean: np.ndarray | None = None
    post_cov: np.ndarray | None = None


def run_pf(trace: Trace, spec: ArmaSpec, constellation: Constellation,
           channel: ChannelParams, Np: int, seed: int, data_aided: bool = False,
           moments: bool = False, chunk: int = 256) -> PfRun:
    """Filter a whole trace, starting from the known first phase."""
    ps = pf_init(spec, trace.states[0, 0], Np, seed)
    n, d = trace.n, spec.dim
    ll = np.empty(n)
    mean = np.empty((n, d)) if moments else np.empty((1, d))
    cov = np.empty((n, d, d)) if moments else np.empty((1, d, d))
    pr, pi_, logp, lr, li = _constellation_arrays(constellation)
    scratch = _kernels.make_scratch(Np, d)
    xs = np.ascontiguousarray(trace.x) if data_aided else np.zeros(n, dtype=complex)
    ys = np.ascontiguousarray(trace.y)
    states, logw = ps.states, ps.log_weights
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        c = stop - start
        normals = ps.rng_move.standard_normal((c, Np))
        us = ps.rng_resample.random(c)
        sl = slice(start, stop) if moments else slice(0, 0)
        status, off = _kernels.pf_run_chunk(
            states, logw, start, ys[start:stop], xs[start:stop], not data_aided,
            pr, pi_, logp, lr, li, channel.snr, spec.a_taps, spec.b_taps, normals,
            us, spec.gamma, ll[start:stop], mean[sl], cov[sl], moments,
            MIN_RESULTANT, scratch)
        if status == _kernels.DEPLETED:
            raise EstimatorError("particle depletion", step=start + off + 1)
        if status == _kernels.DISPERSED:
            raise EstimatorError("dispersed phase posterior", step=start + off + 1)
    if moments:
        return PfRun(ll, mean, cov)
    return PfRun(ll)
