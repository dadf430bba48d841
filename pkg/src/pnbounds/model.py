"""ARMA phase-noise channel: filter description, state dynamics, source,
channel densities and trace simulation.

Conventions
-----------
The frequency noise is white Gaussian noise of standard deviation ``gamma``
shaped by::

            1 + b_1 z^-1 + ... + b_N z^-N
    H(z) = -------------------------------
            1 - a_1 z^-1 - ... - a_N z^-N

and the phase is its 1-causal accumulation modulo 2*pi. The state at time k
is the row ``(phi_k, w_{k-1}, ..., w_{k-N})`` where ``w`` is the output of
the autoregressive part (the shift-register content), newest first.

Time indices in a :class:`Trace` are zero-based: ``trace.x[k]`` and
``trace.y[k]`` are the (k+1)-th channel use and ``trace.states[k]`` the state
that produced them; ``trace.states[n]`` is the state one step past the end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import _kernels
from .exceptions import UnstableFilterError

TWO_PI = 2.0 * math.pi

__all__ = [
    "ArmaSpec", "StateVector", "Constellation", "ChannelParams", "Trace",
    "build_from_zero_pole", "wiener_spec", "transition_matrix",
    "stationary_register_cov", "step_state", "wrap_angle", "generate_trace",
    "data_aided_likelihood", "blind_likelihood", "log_data_aided_likelihood",
    "log_blind_likelihood", "modulo_integers", "qam", "get_constellation",
    "make_rng", "child_seed",
]


def wrap_angle(phi):
    """Map angles to [0, 2*pi)."""
    r = np.mod(phi, TWO_PI)
    r = np.where(r >= TWO_PI, r - TWO_PI, r)
    return float(r) if np.ndim(r) == 0 else r


def make_rng(seed, *spawn_key):
    """Counter-based generator (Philox) for ``seed`` and an optional stream key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *key) -> int:
    """Deterministic 63-bit integer seed for a sub-task of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class ArmaSpec:
    """Frequency-noise shaping filter and innovation standard deviation.

    Parameters
    ----------
    a_taps : sequence of float
        Feedback taps ``a_1..a_N`` (denominator ``1 - sum a_k z^-k``).
    b_taps : sequence of float
        Forward taps ``b_1..b_N`` (numerator ``1 + sum b_k z^-k``).
    gamma : float
        Standard deviation of the innovation, radians.

    The shorter tap vector is zero-padded so both have length ``N >= 1``.
    """

    a_taps: np.ndarray
    b_taps: np.ndarray
    gamma: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a_taps, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_taps, dtype=float))
        N = max(a.size, b.size)
        if N < 1:
            raise ValueError("filter order N must be >= 1; use a=b=(0,) for H(z)=1")
        a = np.pad(a, (0, N - a.size))
        b = np.pad(b, (0, N - b.size))
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        roots = np.roots(np.r_[1.0, -a]) if np.any(a) else np.zeros(0)
        bad = roots[np.abs(roots) >= 1.0]
        if bad.size:
            listing = ", ".join(f"{r:.6g} (|r|={abs(r):.6g})" for r in bad)
            raise UnstableFilterError(
                f"denominator has roots on or outside the unit circle: {listing}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_taps", a)
        object.__setattr__(self, "b_taps", b)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def order(self) -> int:
        return self.a_taps.size

    @property
    def dim(self) -> int:
        """Dimension of the state vector (N + 1)."""
        return self.a_taps.size + 1

    def with_gamma(self, gamma: float) -> "ArmaSpec":
        return ArmaSpec(self.a_taps, self.b_taps, gamma)


def _expand(factors):
    poly = np.array([1.0])
    for f in factors:
        poly = np.polymul(poly, f)
    return poly


def build_from_zero_pole(zeros: Sequence[tuple[float, int]], poles: Sequence[float],
                         gamma: float) -> ArmaSpec:
    """Expand a factored H(z) into tap vectors.

    Each zero ``(c, d)`` is the factor ``1 - c z^-d``; each pole ``alpha`` is
    the factor ``1 - alpha z^-1``.

    >>> spec = build_from_zero_pole([(1, 2)], [0.5], 0.1)
    >>> spec.a_taps.tolist(), spec.b_taps.tolist()
    ([0.5, 0.0], [0.0, -1.0])
    """
    num_factors = []
    for c, d in zeros:
        d = int(d)
        if d < 1:
            raise ValueError(f"zero delay must be >= 1, got {d}")
        f = np.zeros(d + 1)
        f[0] = 1.0
        f[d] = -float(c)
        num_factors.append(f)
    num = _expand(num_factors)
    den = _expand([np.array([1.0, -float(p)]) for p in poles])
    bad = [p for p in poles if abs(p) >= 1.0]
    if bad:
        raise UnstableFilterError(f"poles on or outside the unit circle: {bad}")
    if max(num.size, den.size) < 2:
        raise ValueError("H(z) must have order >= 1; pass zeros=[(0, 1)], poles=[0] for H(z)=1")
    return ArmaSpec(-den[1:], num[1:], gamma)


def wiener_spec(gamma: float) -> ArmaSpec:
    """First-order stand-in for the random phase walk, H(z) = 1."""
    return ArmaSpec([0.0], [0.0], gamma)


def transition_matrix(spec: ArmaSpec) -> np.ndarray:
    """State transition matrix F of size (N+1) x (N+1)."""
    N = spec.order
    F = np.zeros((N + 1, N + 1))
    F[0, 0] = 1.0
    F[0, 1:] = spec.a_taps + spec.b_taps
    F[1, 1:] = spec.a_taps
    F[2:, 1:-1] = np.eye(N - 1)
    return F


def stationary_register_cov(spec: ArmaSpec) -> np.ndarray:
    """Stationary covariance of the shift-register content (N x N)."""
    N = spec.order
    A = np.zeros((N, N))
    A[0] = spec.a_taps
    A[1:, :-1] = np.eye(N - 1)
    Q = np.zeros((N, N))
    Q[0, 0] = spec.gamma ** 2
    P = linalg.solve_discrete_lyapunov(A, Q)
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class StateVector:
    """Wrapped phase and shift-register content (newest first)."""

    phi: float
    register: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))
        reg = np.array(self.register, dtype=float).reshape(-1)
        reg.setflags(write=False)
        object.__setattr__(self, "register", reg)

    def as_array(self) -> np.ndarray:
        return np.r_[self.phi, self.register]

    @classmethod
    def from_array(cls, s) -> "StateVector":
        return cls(s[0], s[1:])


def step_state(spec: ArmaSpec, s: StateVector, v: float) -> StateVector:
    """Advance the state by one channel use with innovation ``v``."""
    row = s.as_array()
    _kernels.step_state_inplace(row, spec.a_taps, spec.b_taps, float(v))
    return StateVector.from_array(row)


def modulo_integers(spec: ArmaSpec, states: np.ndarray) -> np.ndarray:
    """The integers m linking consecutive wrapped states.

    Returns ``(phi_{k+1} - phi_k - w_k - sum_i b_i w_{k-i}) / (2 pi)`` for
    each consecutive pair of rows; these are integers for a valid trajectory.
    """
    states = np.asarray(states)
    phi = states[:, 0]
    lam = states[1:, 1] + states[:-1, 1:] @ spec.b_taps
    return (phi[1:] - phi[:-1] - lam) / TWO_PI


@dataclass(frozen=True)
class Constellation:
    """Discrete input alphabet with prior probabilities."""

    points: np.ndarray
    priors: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).reshape(-1)
        pri = np.asarray(self.priors, dtype=float).reshape(-1)
        if pts.size != pri.size or pts.size == 0:
            raise ValueError("points and priors must be non-empty and of equal length")
        if np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be a probability vector")
        pts.setflags(write=False)
        pri.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "priors", pri)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def energy(self) -> float:
        return float(np.sum(self.priors * np.abs(self.points) ** 2))

    @property
    def mean(self) -> complex:
        return complex(np.sum(self.priors * self.points))

    def entropy(self) -> float:
        """Source entropy H(X) in bits."""
        p = self.priors[self.priors > 0]
        return float(-np.sum(p * np.log2(p)))

    def sample_indices(self, rng, n: int) -> np.ndarray:
        return rng.choice(self.size, size=n, p=self.priors)


def qam(M: int) -> Constellation:
    """Square M-QAM with uniform priors, normalized to unit energy."""
    m = int(round(math.sqrt(M)))
    if m * m != M or m < 2:
        raise ValueError(f"square QAM needs M = m^2 with m >= 2, got {M}")
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    pts = (levels[None, :] + 1j * levels[::-1, None]).reshape(-1)
    pts = pts / math.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(pts, np.full(M, 1.0 / M), name=f"qam{M}")


def get_constellation(name: str) -> Constellation:
    """Built-in constellations: ``qam4`` and ``qam16``."""
    table = {"qam4": 4, "qam16": 16}
    try:
        return qam(table[name.lower()])
    except KeyError:
        raise ValueError(f"unknown modulation {name!r}; expected one of {sorted(table)}") from None


@dataclass(frozen=True)
class ChannelParams:
    """AWGN channel; ``snr`` is linear, the complex noise variance is 1/snr."""

    snr: float

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr!r}")
        object.__setattr__(self, "snr", float(self.snr))

    @classmethod
    def from_db(cls, snr_db: float) -> "ChannelParams":
        return cls(10.0 ** (snr_db / 10.0))

    @property
    def noise_var(self) -> float:
        return 1.0 / self.snr


@dataclass(frozen=True)
class Trace:
    """One joint realization of source, state and channel output."""

    x: np.ndarray
    x_index: np.ndarray
    states: np.ndarray
    y: np.ndarray
    seed: int
    v: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.x.size

    def state(self, k: int) -> StateVector:
        return StateVector.from_array(self.states[k])


def generate_trace(spec: ArmaSpec, constellation: Constellation,
                   channel: ChannelParams, n: int, seed: int) -> Trace:
    """Simulate ``n`` channel uses.

    The first phase is uniform on [0, 2*pi) and the shift register starts in
    its stationary distribution. The output is a deterministic function of
    the arguments; each random quantity comes from its own Philox stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng_init, rng_x, rng_v, rng_w = (make_rng(seed, i) for i in range(4))
    phi0 = rng_init.uniform(0.0, TWO_PI)
    P = stationary_register_cov(spec)
    reg0 = _chol_psd(P) @ rng_init.standard_normal(spec.order)
    idx = constellation.sample_indices(rng_x, n)
    x = constellation.points[idx]
    v = spec.gamma * rng_v.standard_normal(n)
    states = _kernels.simulate_states(phi0, reg0, spec.a_taps, spec.b_taps, v)
    w = rng_w.standard_normal((n, 2)) @ np.array([1.0, 1j]) * math.sqrt(0.5 / channel.snr)
    y = x * np.exp(1j * states[:n, 0]) + w
    for arr in (x, idx, states, y, v):
        arr.setflags(write=False)
    return Trace(x=x, x_index=idx, states=states, y=y, seed=int(seed), v=v)


def _chol_psd(P):
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(P)
        return V * np.sqrt(np.clip(w, 0.0, None))


def log_data_aided_likelihood(y, x, phi, channel: ChannelParams):
    """Natural log of the data-aided channel density (broadcasts)."""
    snr = channel.snr
    d2 = np.abs(np.asarray(y) - np.asarray(x) * np.exp(1j * np.asarray(phi))) ** 2
    return math.log(snr / math.pi) - snr * d2


def data_aided_likelihood(y, x, phi, channel: ChannelParams):
    """Circularly-symmetric Gaussian density of ``y`` centred on ``x e^{j phi}``.

    >>> round(float(data_aided_likelihood(0.0, 1.0, 0.0, ChannelParams(1.0))), 8)
    0.11709966
    """
    snr = channel.snr
    d2 = np.abs(np.asarray(y) - np.asarray(x) * np.exp(1j * np.asarray(phi))) ** 2
    return snr / math.pi * np.exp(-snr * d2)


def log_blind_likelihood(y, phi, constellation: Constellation, channel: ChannelParams):
    """Natural log of the symbol-marginalized channel density (broadcasts over y, phi)."""
    y = np.asarray(y)[..., None]
    phi = np.asarray(phi)[..., None]
    with np.errstate(divide="ignore"):
        logp = np.log(constellation.priors)
    terms = logp + log_data_aided_likelihood(y, constellation.points, phi, channel)
    return logsumexp(terms, axis=-1)


def blind_likelihood(y, phi, constellation: Constellation, channel: ChannelParams):
    """Channel density with the input symbol averaged out under its prior."""
    return np.exp(log_blind_likelihood(y, phi, constellation, channel))
