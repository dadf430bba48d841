"""Reference rates used to check the estimators.

* :func:`awgn_mi` - mutual information of a discrete constellation on the
  plain AWGN channel (the vanishing phase-noise limit), by 2-D Gauss-Hermite
  quadrature or by Monte Carlo.
* :func:`trellis_rate` - information rate of the channel with a first-order
  random phase walk, estimated with the forward recursion of an auxiliary
  channel whose phase is quantized to ``bins`` levels.

Precomputed AWGN values live in ``data/oracle_fixtures.json``; regenerate
them with :func:`build_fixtures`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp, ndtr

from .exceptions import EstimatorError
from .model import (ChannelParams, Constellation, Trace, generate_trace,
                    get_constellation, make_rng, wiener_spec)

LN2 = math.log(2.0)
TWO_PI = 2.0 * math.pi
MI_AGREEMENT = 1e-3
FIXTURES = "oracle_fixtures.json"

__all__ = ["awgn_mi", "awgn_mi_quadrature", "awgn_mi_monte_carlo", "TrellisGrid",
           "trellis_series", "trellis_log_pred", "trellis_rate", "load_fixtures", "build_fixtures",
           "fixture_awgn_mi"]


def awgn_mi_quadrature(constellation: Constellation, channel: ChannelParams,
                       nodes: int = 200) -> float:
    """I(X;Y) in bits for ``y = x + w`` by product Gauss-Hermite over the noise."""
    t, w = hermgauss(nodes)
    # w = (t1 + j t2) / sqrt(snr) has the noise distribution under exp(-t1^2 - t2^2)
    noise = (t[:, None] + 1j * t[None, :]).ravel() / math.sqrt(channel.snr)
    weights = (w[:, None] * w[None, :]).ravel() / math.pi
    pts = constellation.points
    with np.errstate(divide="ignore"):
        logp = np.log(constellation.priors)
    total = 0.0
    for x, p in zip(pts, constellation.priors):
        if p == 0:
            continue
        expo = -channel.snr * (np.abs((x - pts)[:, None] + noise) ** 2 - np.abs(noise) ** 2)
        inner = logsumexp(logp[:, None] + expo, axis=0)
        total -= p * np.dot(weights, inner)
    return float(total / LN2)


def awgn_mi_monte_carlo(constellation: Constellation, channel: ChannelParams,
                        n: int = 4_000_000, seed: int = 0, chunk: int = 200_000):
    """Sample-average estimate; returns ``(bits, stderr)``."""
    rng = make_rng(seed)
    pts = constellation.points
    with np.errstate(divide="ignore"):
        logp = np.log(constellation.priors)
    total = 0.0
    total2 = 0.0
    sigma = math.sqrt(0.5 / channel.snr)
    for s in range(0, n, chunk):
        m = min(chunk, n - s)
        idx = constellation.sample_indices(rng, m)
        w = sigma * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
        y = pts[idx] + w
        expo = -channel.snr * np.abs(y[:, None] - pts[None, :]) ** 2
        info = (-channel.snr * np.abs(w) ** 2 - logsumexp(logp + expo, axis=1)) / LN2
        total += info.sum()
        total2 += (info ** 2).sum()
    mean = total / n
    var = max(total2 / n - mean * mean, 0.0)
    return float(mean), math.sqrt(var / n)


def awgn_mi(constellation: Constellation, channel: ChannelParams,
            method: str = "quadrature", n: int = 4_000_000, seed: int = 0) -> float:
    """AWGN mutual information in bits.

    ``method`` is ``"quadrature"``, ``"monte_carlo"`` or ``"both"``; the
    last computes both, raises :class:`EstimatorError` if they differ by more
    than 1e-3 bits and returns the quadrature value.
    """
    if method == "quadrature":
        return awgn_mi_quadrature(constellation, channel)
    if method == "monte_carlo":
        return awgn_mi_monte_carlo(constellation, channel, n, seed)[0]
    if method == "both":
        q = awgn_mi_quadrature(constellation, channel)
        mc, _ = awgn_mi_monte_carlo(constellation, channel, n, seed)
        if abs(q - mc) > MI_AGREEMENT:
            raise EstimatorError(f"AWGN MI methods disagree: quadrature {q:.6f} "
                                 f"vs Monte Carlo {mc:.6f} bits")
        return q
    raise ValueError(f"unknown method {method!r}")


def _interval_prob(lo, hi):
    """P(lo < Z < hi) for standard normal Z, accurate in both tails."""
    return np.where(lo > 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


@dataclass(frozen=True)
class TrellisGrid:
    """Uniform phase quantization with a circulant random-walk kernel.

    ``kernel[j]`` is the probability of moving ``j`` bins forward; it is the
    mass of the wrapped N(0, gamma^2) increment over the destination bin.
    """

    bins: int
    gamma: float

    def __post_init__(self):
        if self.bins < 64:
            raise ValueError("trellis needs at least 64 phase bins")

    @property
    def width(self) -> float:
        return TWO_PI / self.bins

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.bins) * self.width

    @property
    def kernel(self) -> np.ndarray:
        off = self.centers
        off = np.where(off > math.pi, off - TWO_PI, off)
        L = int(math.ceil(12.0 * self.gamma / TWO_PI)) + 1
        p = np.zeros(self.bins)
        for l in range(-L, L + 1):
            lo = (off - 0.5 * self.width + TWO_PI * l) / self.gamma
            hi = (off + 0.5 * self.width + TWO_PI * l) / self.gamma
            p += _interval_prob(lo, hi)
        return p / p.sum()

    def kernel_matrix(self) -> np.ndarray:
        """Full row-stochastic transition matrix (rows: source bin)."""
        p = self.kernel
        j = (np.arange(self.bins)[None, :] - np.arange(self.bins)[:, None]) % self.bins
        return p[j]


def trellis_log_pred(trace: Trace, constellation: Constellation, channel: ChannelParams,
                     grid: TrellisGrid, chunk: int = 128):
    """Per-step predictive log-likelihoods (nats) of the quantized-phase channel.

    Returns ``(blind, data_aided)``: ``log q(y_k|y_1..y_{k-1})`` and
    ``log q(y_k|x_1..x_k, y_1..y_{k-1})``. Both forward recursions start
    from the bin holding the known first phase and are renormalized every
    step.
    """
    n, B = trace.n, grid.bins
    Kf = np.fft.rfft(grid.kernel)
    c = grid.centers
    rot = np.exp(1j * c)
    pts = constellation.points
    with np.errstate(divide="ignore"):
        logp = np.log(constellation.priors)
    snr = channel.snr
    lognorm = math.log(snr / math.pi)
    alpha = np.zeros((2, B))
    alpha[:, int(round(trace.states[0, 0] / grid.width)) % B] = 1.0
    out = np.empty((n, 2))
    for s in range(0, n, chunk):
        sl = slice(s, min(s + chunk, n))
        y = trace.y[sl, None]
        le_da = lognorm - snr * np.abs(y - trace.x[sl, None] * rot) ** 2
        z = y * np.conj(rot)
        le_bl = logsumexp(logp + lognorm - snr * np.abs(z[..., None] - pts) ** 2, axis=-1)
        le = np.stack([le_bl, le_da], axis=1)                 # (chunk, 2, B)
        mx = le.max(axis=2, keepdims=True)
        em = np.exp(le - mx)
        for t in range(le.shape[0]):
            k = s + t
            if k > 0:
                alpha = np.fft.irfft(np.fft.rfft(alpha, axis=1) * Kf, n=B, axis=1)
                np.clip(alpha, 0.0, None, out=alpha)
                alpha /= alpha.sum(axis=1, keepdims=True)
            post = alpha * em[t]
            norm = post.sum(axis=1)
            if not np.all(norm > 0) or not np.all(np.isfinite(norm)):
                raise EstimatorError("trellis forward recursion underflow", step=k + 1)
            alpha = post / norm[:, None]
            out[k] = np.log(norm) + mx[t, :, 0]
    return out[:, 0], out[:, 1]


def trellis_series(trace: Trace, constellation: Constellation, channel: ChannelParams,
                   grid: TrellisGrid) -> np.ndarray:
    """Per-step information density estimate in bits."""
    blind, da = trellis_log_pred(trace, constellation, channel, grid)
    return (da - blind) / LN2


def trellis_rate(gamma: float, constellation: Constellation, channel: ChannelParams,
                 bins: int, n: int, seed: int, burn_in: int = 1000,
                 trace: Trace | None = None) -> float:
    """Information rate (bits) of the random-phase-walk channel via a phase trellis.

    The trace is simulated with ``H(z) = 1`` unless given. This is an
    auxiliary-channel estimate that converges as ``bins`` grows.
    """
    if trace is None:
        trace = generate_trace(wiener_spec(gamma), constellation, channel, n, seed)
    series = trellis_series(trace, constellation, channel, TrellisGrid(bins, gamma))
    return float(series[burn_in:].mean())


def load_fixtures() -> dict:
    text = resources.files("pnbounds").joinpath("data", FIXTURES).read_text()
    return json.loads(text)


def fixture_awgn_mi(modulation: str, snr_db: float) -> float:
    """Look up a precomputed AWGN mutual information (bits)."""
    for row in load_fixtures()["awgn_mi"]:
        if row["modulation"] == modulation and math.isclose(row["snr_db"], snr_db):
            return row["bits"]
    raise KeyError(f"no fixture for {modulation} at {snr_db} dB")


def build_fixtures(snr_db=tuple(range(-3, 25)), modulations=("qam4", "qam16")) -> dict:
    """Recompute the fixture table (quadrature, checked against Monte Carlo)."""
    import numpy
    import scipy

    rows = []
    for mod in modulations:
        c = get_constellation(mod)
        for s in snr_db:
            ch = ChannelParams.from_db(float(s))
            q = awgn_mi_quadrature(c, ch)
            mc, se = awgn_mi_monte_carlo(c, ch, n=1_000_000, seed=int(s) + 100)
            rows.append({"modulation": mod, "snr_db": float(s), "bits": q,
                         "monte_carlo": mc, "monte_carlo_stderr": se})
    return {
        "generated_by": "pnbounds.oracle.build_fixtures",
        "method": "2-D Gauss-Hermite, 200 nodes per axis; Monte Carlo 1e6 samples",
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "awgn_mi": rows,
    }
