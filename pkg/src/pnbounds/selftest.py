"""Fast consistency checks run by ``pnbounds selftest``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .bounds import lower_bound, upper_bound
from .ekf import run_ekf
from .gaussian import folded_log_density_batch
from .harness import SM_POLES, SM_ZEROS, build_spec
from .model import (ChannelParams, blind_likelihood, data_aided_likelihood,
                    generate_trace, get_constellation, make_rng)
from .oracle import awgn_mi

FAULTS = ("cov-asymmetry",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def folded_normalization_integral(mean, cov, n_phi: int = 256, n_w: int = 801) -> float:
    """Integral of the folded density over [0, 2pi) x R for a 2-D state.

    The phase axis uses the periodic trapezoid rule; the register axis a
    uniform grid over +-14 standard deviations.
    """
    phi = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    sd = math.sqrt(cov[1, 1])
    w = mean[1] + np.linspace(-14.0, 14.0, n_w) * sd
    P, W = np.meshgrid(phi, w, indexing="ij")
    pts = np.stack([P.ravel(), W.ravel()], axis=1)
    m = np.broadcast_to(mean, pts.shape)
    c = np.broadcast_to(cov, (pts.shape[0], 2, 2))
    f = np.exp(folded_log_density_batch(m, c, pts)).reshape(P.shape)
    inner = np.trapezoid(f, w, axis=1) if hasattr(np, "trapezoid") else np.trapz(f, w, axis=1)
    return float(inner.sum() * (2.0 * math.pi / n_phi))


def random_gaussian_2d(rng):
    """Random mean and covariance with phase spread from 0.05 to 2 rad."""
    mean = np.array([rng.uniform(0, 2 * math.pi), rng.normal(0, 1)])
    s_phi = math.exp(rng.uniform(math.log(0.05), math.log(2.0)))
    s_w = math.exp(rng.uniform(math.log(0.05), math.log(3.0)))
    rho = rng.uniform(-0.95, 0.95)
    cov = np.array([[s_phi ** 2, rho * s_phi * s_w], [rho * s_phi * s_w, s_w ** 2]])
    return mean, cov


def check_folded_normalization(cases: int = 20, seed: int = 11, tol: float = 1e-6):
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(cases):
        mean, cov = random_gaussian_2d(rng)
        worst = max(worst, abs(folded_normalization_integral(mean, cov) - 1.0))
    return worst <= tol, f"max |integral - 1| = {worst:.2e} over {cases} cases"


def likelihood_identity_error(n: int = 10_000, seed: int = 12, modulation: str = "qam16"):
    """Largest relative gap between the blind likelihood and its symbol sum."""
    rng = make_rng(seed)
    const = get_constellation(modulation)
    snr = 10 ** rng.uniform(-0.5, 2.0, n)
    y = rng.normal(0, 1.2, n) + 1j * rng.normal(0, 1.2, n)
    phi = rng.uniform(0, 2 * math.pi, n)
    worst = 0.0
    for k in range(n):
        ch = ChannelParams(float(snr[k]))
        b = blind_likelihood(y[k], phi[k], const, ch)
        s = sum(p * data_aided_likelihood(y[k], x, phi[k], ch)
                for x, p in zip(const.points, const.priors))
        if s > 0:
            worst = max(worst, abs(b - s) / s)
    return worst


def check_likelihood_identity(n: int = 10_000, tol: float = 1e-12):
    worst = likelihood_identity_error(n)
    return bool(worst <= tol), f"max relative error {worst:.2e} over {n} inputs"


def check_covariance_symmetry(fault=None, n: int = 3000):
    spec = build_spec(SM_ZEROS, SM_POLES, 0.1)
    const = get_constellation("qam4")
    ch = ChannelParams.from_db(9.0)
    trace = generate_trace(spec, const, ch, n, 5)
    covs = np.array(run_ekf(trace, spec, ch).post_cov)
    if fault == "cov-asymmetry":
        covs[n // 2, 0, 1] += 1e-6
    asym = float(np.abs(covs - np.swapaxes(covs, 1, 2)).max())
    min_eig = float(np.linalg.eigvalsh(0.5 * (covs + np.swapaxes(covs, 1, 2))).min())
    ok = asym <= 1e-12 and min_eig >= -1e-10
    return ok, f"max asymmetry {asym:.1e}, min eigenvalue {min_eig:.1e}"


def check_mi_methods():
    const = get_constellation("qam4")
    ch = ChannelParams(4.0)
    try:
        v = awgn_mi(const, ch, method="both", n=1_000_000)
    except RuntimeError as exc:
        return False, str(exc)
    return True, f"I = {v:.6f} bits at snr 4.0"


def check_degenerate_oracle(n: int = 20_000, seed: int = 3):
    """Bounds at vanishing phase noise against the AWGN mutual information."""
    spec = build_spec(SM_ZEROS, SM_POLES, 1e-6)
    const = get_constellation("qam4")
    ch = ChannelParams.from_db(6.0)
    ref = awgn_mi(const, ch)
    trace = generate_trace(spec, const, ch, n, seed)
    ekf = run_ekf(trace, spec, ch)
    lb = lower_bound(trace, spec, const, ch, ekf=ekf)
    ub = upper_bound(trace, spec, const, ch, "kalman", 4096, seed,
                     posteriors=(ekf.post_mean, ekf.post_cov))
    ok = abs(lb.value - ref) <= 0.02 and abs(ub.value - ref) <= 0.05
    return ok, (f"I={ref:.4f} LB={lb.value:.4f}+-{lb.stderr:.4f} "
                f"UB={ub.value:.4f}+-{ub.stderr:.4f}")


def run_selftest(fault=None, report=None) -> list[CheckResult]:
    """Run all checks; ``report`` is called with each result as it finishes."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    checks = [
        ("folded-normalization", check_folded_normalization),
        ("likelihood-identity", check_likelihood_identity),
        ("covariance-symmetry", lambda: check_covariance_symmetry(fault)),
        ("awgn-mi-methods", check_mi_methods),
        ("degenerate-noise-oracle", check_degenerate_oracle),
    ]
    out = []
    for name, fn in checks:
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(ok), detail, time.perf_counter() - t)
        out.append(res)
        if report:
            report(res)
    return out
