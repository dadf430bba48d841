"""Upper and lower bounds on the information rate, in bits per channel use.

Upper bound
-----------
``UB = h(Y)~ - h(Y|X,S) + D``, all sample averages along one realization.
``h(Y)~`` comes from the predictive likelihood of a blind particle filter.
``D`` replaces the difference between the conditional state entropy rate
and the state entropy rate. Its per-sample term is::

    d_k = log2 q_pred(s_{k+1}) - log2 q_post(s_k)

where ``q_post`` is the phase-folded Gaussian built from the data-aided
tracker's posterior moments at time k, and ``q_pred`` the same moments
pushed through the linear dynamics. The approximate backward conditional
of ``s_k`` given ``s_{k+1}`` is ``p(s_{k+1}|s_k) q_post(s_k) / q_pred(s_{k+1})``,
and its log contains the transition density ``log p(s_{k+1}|s_k)``. That
same term, averaged along the same path, is the sample estimate of the
state entropy rate. Subtracting one from the other cancels it sample by
sample. The rank-one transition density therefore never has to be
evaluated.

Lower bound
-----------
``LB = H(X) - H(X|Y)~`` with the symbol posterior computed from the
data-aided Kalman filter's predictive phase distribution, integrated against
the channel density by Gauss-Hermite quadrature. The channel factor is
2*pi-periodic in the phase, so integrating against the unfolded Gaussian
gives the same value as the folded one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp

from .ekf import EkfRun, run_ekf
from .exceptions import EstimatorError
from .gaussian import folded_log_density_batch, process_cov, propagate_batch
from .model import ArmaSpec, ChannelParams, Constellation, Trace, child_seed, transition_matrix
from .pf import run_pf

LN2 = math.log(2.0)
BURN_IN = 1000
BATCH = 1000
MIN_BATCHES = 10
DEFAULT_NP = 4096
DEFAULT_QUAD_NODES = 32

__all__ = [
    "BoundEstimate", "TrackerChoice", "h_y_given_xs", "batch_means",
    "blind_entropy_series", "tracker_posteriors", "state_term_series",
    "upper_bound", "lower_bound", "symbol_log_posteriors",
]


@dataclass(frozen=True)
class BoundEstimate:
    """Rate estimate with batch-means standard error.

    ``components`` holds the named pieces of the bound (bits); ``halves`` the
    (value, stderr) of the first and second half of the batches.
    """

    value: float
    stderr: float
    n_used: int
    components: dict = field(default_factory=dict)
    halves: tuple = ()


@dataclass(frozen=True)
class TrackerChoice:
    """Which data-aided tracker supplies the posterior moments."""

    kind: str = "kalman"
    Np: int = DEFAULT_NP

    def __post_init__(self):
        if self.kind not in ("kalman", "particle"):
            raise ValueError(f"tracker must be 'kalman' or 'particle', got {self.kind!r}")
        if self.kind == "particle" and self.Np < 2:
            raise ValueError("particle tracker needs Np >= 2")

    @classmethod
    def parse(cls, text) -> "TrackerChoice":
        """``"kalman"``, ``"particle"`` or ``"particle:<Np>"``."""
        if isinstance(text, TrackerChoice):
            return text
        kind, _, np_ = str(text).partition(":")
        return cls(kind, int(np_)) if np_ else cls(kind)

    def __str__(self):
        return self.kind if self.kind == "kalman" else f"particle:{self.Np}"


def h_y_given_xs(channel: ChannelParams) -> float:
    """Differential entropy rate of the channel noise, log2(pi e / snr)."""
    return math.log2(math.pi * math.e / channel.snr)


def batch_means(series, batch: int = BATCH):
    """Mean and non-overlapping batch-means standard error of a series.

    Returns ``(mean, stderr, batch_averages)``.
    """
    series = np.asarray(series, dtype=float)
    nb = series.size // batch
    if nb < MIN_BATCHES:
        raise EstimatorError(f"insufficient samples: {series.size} after burn-in, "
                             f"need {MIN_BATCHES * batch}")
    bm = series[: nb * batch].reshape(nb, batch).mean(axis=1)
    return float(series.mean()), float(bm.std(ddof=1) / math.sqrt(nb)), bm


def _halves(bm):
    h = bm.size // 2
    out = []
    for part in (bm[:h], bm[h:]):
        se = part.std(ddof=1) / math.sqrt(part.size) if part.size > 1 else float("nan")
        out.append((float(part.mean()), float(se)))
    return tuple(out)


def _check_burn_in(trace, burn_in):
    if not 0 <= burn_in < trace.n:
        raise ValueError(f"burn_in must be in [0, n), got {burn_in} for n={trace.n}")


def blind_entropy_series(trace: Trace, spec: ArmaSpec, constellation: Constellation,
                         channel: ChannelParams, np_blind: int = DEFAULT_NP,
                         seed: int = 0) -> np.ndarray:
    """Per-step ``-log2 p(y_k | y_1..y_{k-1})`` from the blind particle filter."""
    run = run_pf(trace, spec, constellation, channel, np_blind, seed)
    return -run.log_pred_like / LN2


def tracker_posteriors(trace: Trace, spec: ArmaSpec, constellation: Constellation,
                       channel: ChannelParams, tracker: TrackerChoice, seed: int = 0,
                       ekf: EkfRun | None = None):
    """Posterior means and covariances of the data-aided tracker, one per step."""
    tracker = TrackerChoice.parse(tracker)
    if tracker.kind == "kalman":
        ekf = ekf if ekf is not None else run_ekf(trace, spec, channel)
        return ekf.post_mean, ekf.post_cov
    run = run_pf(trace, spec, constellation, channel, tracker.Np, seed,
                 data_aided=True, moments=True)
    return run.post_mean, run.post_cov


def state_term_series(trace: Trace, spec: ArmaSpec, post_mean, post_cov) -> np.ndarray:
    """Per-step ``log2 q_pred(s_{k+1}) - log2 q_post(s_k)`` in bits."""
    F = transition_matrix(spec)
    Q = process_cov(spec.gamma, spec.dim)
    n = trace.n
    log_post = folded_log_density_batch(post_mean, post_cov, trace.states[:n])
    pm, pc = propagate_batch(post_mean, post_cov, F, Q)
    log_pred = folded_log_density_batch(pm, pc, trace.states[1:n + 1])
    return (log_pred - log_post) / LN2


def upper_bound(trace: Trace, spec: ArmaSpec, constellation: Constellation,
                channel: ChannelParams, tracker="kalman", np_blind: int = DEFAULT_NP,
                seed: int = 0, burn_in: int = BURN_IN, batch: int = BATCH,
                h_y_series=None, posteriors=None) -> BoundEstimate:
    """Upper bound on the information rate along ``trace``.

    ``h_y_series`` (from :func:`blind_entropy_series`) and ``posteriors``
    (from :func:`tracker_posteriors`) may be supplied to reuse work across
    trackers; they must come from the same trace.
    """
    _check_burn_in(trace, burn_in)
    tracker = TrackerChoice.parse(tracker)
    if h_y_series is None:
        h_y_series = blind_entropy_series(trace, spec, constellation, channel,
                                          np_blind, child_seed(seed, 1))
    if posteriors is None:
        posteriors = tracker_posteriors(trace, spec, constellation, channel, tracker,
                                        child_seed(seed, 2))
    d = state_term_series(trace, spec, *posteriors)
    hyxs = h_y_given_xs(channel)
    hy = h_y_series[burn_in:]
    d = d[burn_in:]
    series = hy - hyxs + d
    if not np.all(np.isfinite(series)):
        bad = burn_in + int(np.flatnonzero(~np.isfinite(series))[0]) + 1
        raise EstimatorError("non-finite upper-bound term", step=bad)
    value, se, bm = batch_means(series, batch)
    comps = {"h_y": float(hy.mean()), "h_y_given_xs": hyxs, "d_term": float(d.mean())}
    return BoundEstimate(value, se, series.size, comps, _halves(bm))


def symbol_log_posteriors(y, pred_phi, pred_var, constellation: Constellation,
                          channel: ChannelParams, quad_nodes: int = DEFAULT_QUAD_NODES,
                          chunk: int = 4096) -> np.ndarray:
    """Normalized ``log q(x | past)`` for every step and every symbol, shape (n, M).

    The phase is integrated against ``N(pred_phi, pred_var)`` with
    ``quad_nodes`` Gauss-Hermite nodes, entirely in the log domain.
    """
    if quad_nodes < 8:
        raise ValueError("quad_nodes must be >= 8")
    t, w = hermgauss(quad_nodes)
    logw = np.log(w / math.sqrt(math.pi))
    pts = constellation.points
    with np.errstate(divide="ignore"):
        logp = np.log(constellation.priors)
    snr = channel.snr
    lognorm = math.log(snr / math.pi)
    y = np.asarray(y)
    out = np.empty((y.size, pts.size))
    for s in range(0, y.size, chunk):
        sl = slice(s, s + chunk)
        phi = pred_phi[sl, None] + math.sqrt(2.0) * np.sqrt(pred_var[sl, None]) * t
        z = y[sl, None] * np.exp(-1j * phi)
        d2 = np.abs(z[..., None] - pts) ** 2
        ll = logsumexp(logw[:, None] + lognorm - snr * d2, axis=1) + logp
        out[sl] = ll - logsumexp(ll, axis=1, keepdims=True)
    return out


def lower_bound(trace: Trace, spec: ArmaSpec, constellation: Constellation,
                channel: ChannelParams, quad_nodes: int = DEFAULT_QUAD_NODES,
                burn_in: int = BURN_IN, batch: int = BATCH,
                ekf: EkfRun | None = None) -> BoundEstimate:
    """Lower bound from demodulation with the data-aided predictive Kalman filter."""
    _check_burn_in(trace, burn_in)
    ekf = ekf if ekf is not None else run_ekf(trace, spec, channel)
    logq = symbol_log_posteriors(trace.y, ekf.pred_phi, ekf.pred_var, constellation,
                                 channel, quad_nodes)
    logq_true = logq[np.arange(trace.n), trace.x_index][burn_in:] / LN2
    hx = constellation.entropy()
    series = hx + logq_true
    value, se, bm = batch_means(series, batch)
    comps = {"hx": hx, "hx_given_y": float(-logq_true.mean())}
    return BoundEstimate(value, se, series.size, comps, _halves(bm))
