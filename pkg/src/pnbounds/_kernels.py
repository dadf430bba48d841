"""Compiled inner loops.

Everything here works on plain arrays so the public modules can wrap it in
their own types. The particle-filter step is the single implementation used
both by :func:`pnbounds.pf.pf_step` and by the whole-trace runners.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# status codes returned by the particle kernels
OK = -1
DEPLETED = 1
DISPERSED = 2


@njit(cache=True, error_model="numpy")
def wrap_angle(phi):
    if 0.0 <= phi < TWO_PI:
        return phi
    if TWO_PI <= phi < 2.0 * TWO_PI:
        r = phi - TWO_PI
    elif -TWO_PI <= phi < 0.0:
        r = phi + TWO_PI
    else:
        r = phi % TWO_PI
    if r >= TWO_PI:
        r -= TWO_PI
    return r


@njit(cache=True, error_model="numpy")
def step_state_inplace(s, a, b, v):
    """Advance one state row ``(phi, w_{k-1}, ..., w_{k-N})`` in place."""
    N = a.shape[0]
    w = v
    lam = 0.0
    for i in range(N):
        w += a[i] * s[1 + i]
        lam += b[i] * s[1 + i]
    lam += w
    s[0] = wrap_angle(s[0] + lam)
    for i in range(N - 1, 0, -1):
        s[1 + i] = s[i]
    s[1] = w


@njit(cache=True, error_model="numpy")
def simulate_states(phi0, reg0, a, b, v):
    n = v.shape[0]
    d = reg0.shape[0] + 1
    out = np.empty((n + 1, d))
    s = np.empty(d)
    s[0] = wrap_angle(phi0)
    s[1:] = reg0
    out[0] = s
    for k in range(n):
        step_state_inplace(s, a, b, v[k])
        out[k + 1] = s
    return out


@njit(cache=True, inline="always", error_model="numpy")
def _lse_1d(z, levels, snr):
    """log sum_m exp(-snr (z - levels[m])^2)."""
    best = np.inf
    for m in range(levels.shape[0]):
        dz = z - levels[m]
        e = dz * dz
        if e < best:
            best = e
    acc = 0.0
    for m in range(levels.shape[0]):
        dz = z - levels[m]
        e = snr * (best - dz * dz)
        if e > -60.0:
            acc += math.exp(e)
    return -snr * best + math.log(acc)


@njit(cache=True, inline="always", error_model="numpy")
def _log_like_particle(c, sn, yr, yi, blind, xr, xi, pr, pi_, logp, log_norm,
                       snr, lev_r, lev_i):
    # rotate the observation instead of every constellation point
    zr = yr * c + yi * sn
    zi = yi * c - yr * sn
    if not blind:
        dr = zr - xr
        di = zi - xi
        return log_norm - snr * (dr * dr + di * di)
    if lev_r.shape[0] > 0:
        # uniform square grid: the sum over points factorizes over I and Q
        return (log_norm + logp[0] + _lse_1d(zr, lev_r, snr)
                + _lse_1d(zi, lev_i, snr))
    M = pr.shape[0]
    mx = -np.inf
    for m in range(M):
        dr = zr - pr[m]
        di = zi - pi_[m]
        e = logp[m] - snr * (dr * dr + di * di)
        if e > mx:
            mx = e
    acc = 0.0
    for m in range(M):
        dr = zr - pr[m]
        di = zi - pi_[m]
        e = logp[m] - snr * (dr * dr + di * di) - mx
        if e > -60.0:
            acc += math.exp(e)
    return log_norm + mx + math.log(acc)


@njit(cache=True, error_model="numpy")
def systematic_indices(weights, u):
    """Systematic resampling; ``weights`` normalized, ``u`` uniform on [0, 1)."""
    Np = weights.shape[0]
    idx = np.empty(Np, dtype=np.int64)
    j = 0
    cum = weights[0]
    for i in range(Np):
        pos = (u + i) / Np
        while pos >= cum and j < Np - 1:
            j += 1
            cum += weights[j]
        idx[i] = j
    return idx


@njit(cache=True, error_model="numpy")
def normalized_weights(logw):
    mx = logw.max()
    w = np.exp(logw - mx)
    return w / w.sum()


def make_scratch(Np, d):
    return (np.empty(Np), np.empty(Np), np.empty(Np), np.empty(Np),
            np.empty((Np, d)))


@njit(cache=True, error_model="numpy")
def pf_step_kernel(states, logw, k, yr, yi, blind, xr, xi, pr, pi_, logp,
                   lev_r, lev_i, snr, a, b, normals, u, gamma, scratch):
    """One resample/propagate/weight cycle, in place.

    On return ``scratch[0]`` holds the normalized posterior weights and
    ``scratch[2]``/``scratch[3]`` the cosine/sine of each particle phase.
    Returns ``(status, log_pred_like)``.
    """
    w, ll, cs, sn, buf = scratch
    Np = states.shape[0]
    mw = -np.inf
    for i in range(Np):
        if logw[i] > mw:
            mw = logw[i]
    s_prior = 0.0
    s2 = 0.0
    for i in range(Np):
        wi = math.exp(logw[i] - mw)
        w[i] = wi
        s_prior += wi
        s2 += wi * wi
    if k > 0:
        if s_prior * s_prior / s2 < 0.5 * Np:
            for i in range(Np):
                w[i] /= s_prior
            idx = systematic_indices(w, u)
            d = states.shape[1]
            for i in range(Np):
                for j in range(d):
                    buf[i, j] = states[idx[i], j]
            for i in range(Np):
                for j in range(d):
                    states[i, j] = buf[i, j]
            logw[:] = 0.0
            mw = 0.0
            s_prior = float(Np)
        for i in range(Np):
            step_state_inplace(states[i], a, b, gamma * normals[i])
    log_norm = math.log(snr / math.pi)
    mt = -np.inf
    for i in range(Np):
        c = math.cos(states[i, 0])
        s = math.sin(states[i, 0])
        cs[i] = c
        sn[i] = s
        ll[i] = _log_like_particle(c, s, yr, yi, blind, xr, xi, pr, pi_, logp,
                                   log_norm, snr, lev_r, lev_i)
        t = logw[i] + ll[i]
        if t > mt:
            mt = t
    if not np.isfinite(mt):
        return DEPLETED, np.nan
    s_post = 0.0
    for i in range(Np):
        lw = logw[i] + ll[i] - mt
        logw[i] = lw
        wi = math.exp(lw)
        w[i] = wi
        s_post += wi
    for i in range(Np):
        w[i] /= s_post
    # predictive likelihood uses the weights from before this measurement
    log_pred = mt + math.log(s_post) - mw - math.log(s_prior)
    return OK, log_pred


@njit(cache=True, error_model="numpy")
def _moments_from(states, w, cs, sn, mean, cov):
    Np, d = states.shape
    C = 0.0
    S = 0.0
    for i in range(Np):
        C += w[i] * cs[i]
        S += w[i] * sn[i]
    R = math.sqrt(C * C + S * S)
    m = math.atan2(S, C)
    for j in range(d):
        mean[j] = 0.0
    for i in range(Np):
        delta = states[i, 0] - m
        if delta > math.pi:
            delta -= TWO_PI
        elif delta <= -math.pi:
            delta += TWO_PI
        mean[0] += w[i] * delta
        for j in range(1, d):
            mean[j] += w[i] * states[i, j]
    for j in range(d):
        for l in range(d):
            cov[j, l] = 0.0
    x = np.empty(d)
    for i in range(Np):
        delta = states[i, 0] - m
        if delta > math.pi:
            delta -= TWO_PI
        elif delta <= -math.pi:
            delta += TWO_PI
        x[0] = delta - mean[0]
        for j in range(1, d):
            x[j] = states[i, j] - mean[j]
        for j in range(d):
            for l in range(j, d):
                cov[j, l] += w[i] * x[j] * x[l]
    for j in range(d):
        for l in range(j + 1, d):
            cov[l, j] = cov[j, l]
    mean[0] = wrap_angle(m + mean[0])
    return R


@njit(cache=True, error_model="numpy")
def circular_moments(states, logw, mean, cov):
    """Weighted moments with the phase re-centered on its circular mean.

    Writes into ``mean``/``cov`` and returns the resultant length.
    """
    w = normalized_weights(logw)
    cs = np.cos(states[:, 0])
    sn = np.sin(states[:, 0])
    return _moments_from(states, w, cs, sn, mean, cov)


@njit(cache=True, error_model="numpy")
def pf_run_chunk(states, logw, k0, ys, xs, blind, pr, pi_, logp, lev_r, lev_i,
                 snr, a, b, normals, us, gamma, out_ll, out_mean, out_cov,
                 want_moments, min_resultant, scratch):
    """Run consecutive steps; returns ``(status, offset)`` of the first failure."""
    d = states.shape[1]
    mean = np.empty(d)
    cov = np.empty((d, d))
    for t in range(ys.shape[0]):
        y = ys[t]
        x = xs[t]
        status, lp = pf_step_kernel(states, logw, k0 + t, y.real, y.imag, blind,
                                    x.real, x.imag, pr, pi_, logp, lev_r, lev_i,
                                    snr, a, b, normals[t], us[t], gamma, scratch)
        if status != OK:
            return status, t
        out_ll[t] = lp
        if want_moments:
            R = _moments_from(states, scratch[0], scratch[2], scratch[3], mean, cov)
            if R < min_resultant:
                return DISPERSED, t
            out_mean[t] = mean
            out_cov[t] = cov
    return OK, ys.shape[0]


@njit(cache=True, error_model="numpy")
def ekf_run(mean0, cov0, F, Q, ys, xs, snr, pred_phi, pred_var, post_mean,
            post_cov):
    """Data-aided linearized Kalman filter over a whole trace.

    Step ``k`` predicts (skipped at ``k == 0``, where the initial moments are
    the prior on the first state), records the predictive phase moments,
    then applies the Joseph-form update with the known symbol.
    """
    d = mean0.shape[0]
    mean = mean0.copy()
    cov = cov0.copy()
    rv = 0.5 / snr
    eye = np.eye(d)
    H = np.zeros((2, d))
    for k in range(ys.shape[0]):
        if k > 0:
            mean = F @ mean
            mean[0] = wrap_angle(mean[0])
            cov = F @ cov @ F.T + Q
            cov = 0.5 * (cov + cov.T)
        pred_phi[k] = mean[0]
        pred_var[k] = cov[0, 0]
        x = xs[k]
        h = x * complex(math.cos(mean[0]), math.sin(mean[0]))
        H[0, 0] = -h.imag
        H[1, 0] = h.real
        r0 = ys[k].real - h.real
        r1 = ys[k].imag - h.imag
        PHt = cov @ H.T
        S = H @ PHt
        S[0, 0] += rv
        S[1, 1] += rv
        det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
        Si = np.empty((2, 2))
        Si[0, 0] = S[1, 1] / det
        Si[1, 1] = S[0, 0] / det
        Si[0, 1] = -S[0, 1] / det
        Si[1, 0] = -S[1, 0] / det
        K = PHt @ Si
        for j in range(d):
            mean[j] += K[j, 0] * r0 + K[j, 1] * r1
        mean[0] = wrap_angle(mean[0])
        A = eye - K @ H
        cov = A @ cov @ A.T + rv * (K @ K.T)
        cov = 0.5 * (cov + cov.T)
        post_mean[k] = mean
        post_cov[k] = cov
