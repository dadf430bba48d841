"""Gaussian and phase-folded Gaussian densities over the state space.

A folded Gaussian sums the ordinary density over all 2*pi translates of the
first (phase) coordinate, which makes it a proper density on
[0, 2*pi) x R^N. All densities are returned as natural logarithms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import NonPSDError

TWO_PI = 2.0 * math.pi
PSD_TOL = 1e-10
REG_FLOOR = 1e-14
FOLD_RTOL = 1e-12
MAX_FOLD = 16

__all__ = [
    "GaussianNd", "FoldedGaussian", "process_cov", "log_density",
    "folded_log_density", "propagate", "regularize", "log_density_batch",
    "folded_log_density_batch", "propagate_batch",
]


def _check_psd(cov):
    lam = np.linalg.eigvalsh(cov)
    lo = lam[..., 0]
    if np.any(lo < -PSD_TOL) or not np.all(np.isfinite(lam)):
        worst = float(np.nanmin(lo))
        raise NonPSDError(f"covariance is not positive semi-definite: "
                          f"smallest eigenvalue {worst:.3e}")
    return lo


@dataclass(frozen=True)
class GaussianNd:
    """Mean vector and symmetric PSD covariance, re-symmetrized on construction."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float).reshape(mean.size, mean.size)
        cov = 0.5 * (cov + cov.T)
        _check_psd(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class FoldedGaussian:
    """Gaussian whose coordinate 0 is wrapped modulo 2*pi.

    ``max_terms`` caps the translates summed per side; None adapts it to the
    phase spread.
    """

    base: GaussianNd
    max_terms: int | None = MAX_FOLD

    def log_density(self, s) -> float:
        return folded_log_density(self, s)


def process_cov(gamma: float, dim: int) -> np.ndarray:
    """Rank-one innovation covariance: gamma^2 in the leading 2x2 block."""
    Q = np.zeros((dim, dim))
    Q[:2, :2] = gamma ** 2
    return Q


def regularize(covs: np.ndarray) -> np.ndarray:
    """Lift covariances whose smallest eigenvalue is below ``REG_FLOOR``.

    Works on a single matrix or a stack; raises :class:`NonPSDError` for
    eigenvalues below ``-PSD_TOL``.
    """
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    lo = _check_psd(covs)
    shift = np.where(lo < REG_FLOOR, REG_FLOOR - np.minimum(lo, 0.0), 0.0)
    if np.any(shift):
        covs = covs + shift[..., None, None] * np.eye(covs.shape[-1])
    return covs


def _quad_parts(means, covs, points):
    """Cholesky log-determinant and ``Sigma^-1 z`` pieces for a stack."""
    covs = regularize(covs)
    L = np.linalg.cholesky(covs)
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    z = points - means
    return covs, logdet, z


def log_density_batch(means, covs, points) -> np.ndarray:
    """Row-wise Gaussian log-density for stacks of ``(n, d)`` / ``(n, d, d)``."""
    means = np.atleast_2d(means)
    points = np.atleast_2d(points)
    covs = np.asarray(covs, dtype=float).reshape(means.shape[0], means.shape[1], -1)
    covs, logdet, z = _quad_parts(means, covs, points)
    Pz = np.linalg.solve(covs, z[..., None])[..., 0]
    q = np.einsum("ij,ij->i", z, Pz)
    d = means.shape[1]
    return -0.5 * (d * math.log(TWO_PI) + logdet + q)


def log_density(g: GaussianNd, x) -> float:
    """Log of the Gaussian density at ``x`` (nats).

    >>> round(log_density(GaussianNd([0.0], [[1.0]]), [0.0]), 7)
    -0.9189385
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(log_density_batch(g.mean[None], g.cov[None], x)[0])


def folded_log_density_batch(means, covs, points, max_terms: int | None = MAX_FOLD) -> np.ndarray:
    """Row-wise log of the phase-folded Gaussian density.

    The translates are summed outward from the one with the largest
    contribution until the next pair adds less than ``FOLD_RTOL`` of the
    running total, or ``max_terms`` per side is reached (with a warning).
    ``max_terms=None`` sizes the cap from the widest conditional phase
    spread in the batch, so it is never hit.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = means.shape
    covs = np.asarray(covs, dtype=float).reshape(n, d, d)
    covs, logdet, z = _quad_parts(means, covs, points)
    z = z.copy()
    z[:, 0] = np.mod(z[:, 0] + math.pi, TWO_PI) - math.pi
    Pz = np.linalg.solve(covs, z[..., None])[..., 0]
    e0 = np.zeros((n, d, 1))
    e0[:, 0, 0] = 1.0
    P00 = np.linalg.solve(covs, e0)[:, 0, 0]
    q0 = np.einsum("ij,ij->i", z, Pz)
    base = -0.5 * (d * math.log(TWO_PI) + logdet)
    # quadratic in the shift 2*pi*l; start from the integer nearest its minimum
    l_star = np.round(-Pz[:, 0] / (TWO_PI * P00))
    if max_terms is None:
        # terms decay like exp(-(2 pi j)^2 P00 / 2); 8 conditional sds is past 1e-12
        max_terms = int(math.ceil(8.0 / (TWO_PI * math.sqrt(P00.min())))) + 2

    def term(l):
        delta = TWO_PI * l
        return base - 0.5 * (q0 + 2.0 * delta * Pz[:, 0] + delta * delta * P00)

    t0 = term(l_star)
    acc = np.ones(n)
    for j in range(1, max_terms + 1):
        rel = np.exp(term(l_star + j) - t0) + np.exp(term(l_star - j) - t0)
        acc += rel
        if np.all(rel < FOLD_RTOL * acc):
            break
    else:
        warnings.warn(f"folded Gaussian truncated at {max_terms} translates per side",
                      RuntimeWarning, stacklevel=2)
    return t0 + np.log(acc)


def folded_log_density(f: FoldedGaussian, s) -> float:
    """Log-density of a folded Gaussian at a state (array or StateVector)."""
    if hasattr(s, "as_array"):
        s = s.as_array()
    s = np.asarray(s, dtype=float).reshape(1, -1)
    return float(folded_log_density_batch(f.base.mean[None], f.base.cov[None], s,
                                          max_terms=f.max_terms)[0])


def propagate(g: GaussianNd, F: np.ndarray, Q: np.ndarray) -> GaussianNd:
    """Push a Gaussian through the linear dynamics: (F mu, F Sigma F^T + Q)."""
    return GaussianNd(F @ g.mean, F @ g.cov @ F.T + Q)


def propagate_batch(means, covs, F, Q):
    m = means @ F.T
    c = F @ covs @ F.T + Q
    return m, 0.5 * (c + np.swapaxes(c, -1, -2))
