import math

import numpy as np
import pytest

from pnbounds import pf
from pnbounds.bounds import batch_means
from pnbounds.exceptions import EstimatorError
from pnbounds.model import (ChannelParams, Constellation, build_from_zero_pole,
                            generate_trace, get_constellation, log_blind_likelihood,
                            make_rng, wiener_spec)
from pnbounds.oracle import TrellisGrid, trellis_log_pred

LN2 = math.log(2)


def sm(gamma):
    return build_from_zero_pole([(0.9937, 1), (0.7286, 2)], [0.9999], gamma)


def test_init_basics():
    ps = pf.pf_init(sm(0.1), 1.5, 2, 0)
    assert ps.Np == 2 and ps.k == 0
    np.testing.assert_allclose(ps.weights(), [0.5, 0.5])
    assert np.all(ps.states[:, 0] == 1.5)
    assert pf.ess(np.zeros(64)) == pytest.approx(64)
    again = pf.pf_init(sm(0.1), 1.5, 2, 0)
    np.testing.assert_array_equal(ps.states, again.states)
    with pytest.raises(ValueError):
        pf.pf_init(sm(0.1), 0.0, 1, 0)


def test_init_register_is_stationary():
    spec = sm(0.1)
    ps = pf.pf_init(spec, 0.0, 20000, 4)
    var = spec.gamma ** 2 / (1 - 0.9999 ** 2)
    assert np.var(ps.states[:, 1]) == pytest.approx(var, rel=0.05)


def test_first_step_equals_blind_likelihood():
    spec = sm(1e-9)
    c = get_constellation("qam16")
    ch = ChannelParams.from_db(12.0)
    ps = pf.pf_init(spec, 0.8, 512, 1)
    y = 0.4 - 0.2j
    _, lp = pf.pf_step(ps, y, spec, c, ch)
    assert lp == pytest.approx(log_blind_likelihood(y, 0.8, c, ch), abs=1e-12)


def test_resampling_degenerate_weights():
    idx = pf.systematic_resample(np.r_[1.0, np.zeros(9)], 0.37)
    assert np.all(idx == 0)
    idx = pf.systematic_resample(np.r_[np.zeros(9), 1.0], 0.0)
    assert np.all(idx == 9)


def test_resampling_preserves_mean_in_expectation():
    rng = make_rng(3)
    Np = 50
    w = rng.gamma(0.5, size=Np)
    w /= w.sum()
    x = rng.normal(size=Np)
    target = float(w @ x)
    means = np.array([x[pf.systematic_resample(w, rng.random())].mean() for _ in range(1000)])
    se = means.std(ddof=1) / math.sqrt(means.size)
    assert abs(means.mean() - target) < 3 * se


def test_one_point_blind_equals_data_aided():
    one = Constellation(np.array([1 + 0j]), np.array([1.0]))
    spec = wiener_spec(0.1)
    ch = ChannelParams.from_db(8.0)
    tr = generate_trace(spec, one, ch, 200, 2)
    a = pf.run_pf(tr, spec, one, ch, 256, 5)
    b = pf.run_pf(tr, spec, one, ch, 256, 5, data_aided=True)
    # same particles; the two likelihood code paths differ only in rounding
    np.testing.assert_allclose(a.log_pred_like, b.log_pred_like, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("data_aided", [False, True])
def test_run_matches_step_loop(data_aided):
    spec = sm(0.1)
    c = get_constellation("qam4")
    ch = ChannelParams.from_db(9.0)
    tr = generate_trace(spec, c, ch, 400, 6)
    run = pf.run_pf(tr, spec, c, ch, 300, 11, data_aided=data_aided, moments=True, chunk=64)
    ps = pf.pf_init(spec, tr.states[0, 0], 300, 11)
    for k in range(tr.n):
        ps, lp = pf.pf_step(ps, tr.y[k], spec, c, ch, tr.x[k] if data_aided else None)
        assert lp == run.log_pred_like[k]
        g = pf.posterior_moments(ps)
        np.testing.assert_allclose(g.mean, run.post_mean[k], rtol=0, atol=1e-12)
        np.testing.assert_allclose(g.cov, run.post_cov[k], rtol=0, atol=1e-12)


def test_generic_likelihood_path_matches_separable():
    # a non-uniform prior disables the square-grid shortcut
    base = get_constellation("qam16")
    skewed = Constellation(base.points, np.full(16, 1 / 16) + np.linspace(-1e-3, 1e-3, 16))
    uniform_again = Constellation(base.points.copy(), skewed.priors * 0 + 1 / 16)
    spec = sm(0.05)
    ch = ChannelParams.from_db(15.0)
    tr = generate_trace(spec, base, ch, 100, 7)
    a = pf.run_pf(tr, spec, base, ch, 128, 1)
    b = pf.run_pf(tr, spec, uniform_again, ch, 128, 1)
    np.testing.assert_allclose(a.log_pred_like, b.log_pred_like, rtol=1e-12)
    assert pf._square_grid_levels(skewed)[0].size == 0


def _set(states, logw):
    states = np.asarray(states, dtype=float)
    return pf.ParticleSet(states, np.asarray(logw, dtype=float), 1, make_rng(0), make_rng(1))


def test_posterior_moments_identical_particles():
    g = pf.posterior_moments(_set([[1.0, 0.3]] * 5, np.zeros(5)))
    np.testing.assert_allclose(g.mean, [1.0, 0.3], atol=1e-14)
    np.testing.assert_allclose(g.cov, 0.0, atol=1e-14)


def test_posterior_moments_circular_recentering():
    g = pf.posterior_moments(_set([[0.1, 0.0], [2 * math.pi - 0.1, 0.0]], [0.0, 0.0]))
    assert min(g.mean[0], 2 * math.pi - g.mean[0]) == pytest.approx(0.0, abs=1e-14)
    assert g.cov[0, 0] == pytest.approx(0.01, abs=1e-14)


def test_posterior_register_moments_are_plain():
    rng = make_rng(2)
    st = np.c_[rng.uniform(1.0, 1.2, 40), rng.normal(size=(40, 2))]
    logw = rng.normal(size=40)
    g = pf.posterior_moments(_set(st, logw))
    w = np.exp(logw - logw.max())
    w /= w.sum()
    m = w @ st[:, 1:]
    np.testing.assert_allclose(g.mean[1:], m, atol=1e-13)
    d = st[:, 1:] - m
    np.testing.assert_allclose(g.cov[1:, 1:], (w[:, None] * d).T @ d, atol=1e-13)


def test_posterior_errors():
    with pytest.raises(EstimatorError, match="effective sample size"):
        pf.posterior_moments(_set([[0.1, 0], [0.2, 0]], [0.0, -800.0]))
    ring = np.c_[np.arange(8) * 2 * math.pi / 8, np.zeros(8)]
    with pytest.raises(EstimatorError, match="dispersed"):
        pf.posterior_moments(_set(ring, np.zeros(8)))


def test_depletion_is_reported_with_step():
    spec = wiener_spec(0.1)
    ps = pf.pf_init(spec, 0.0, 16, 0)
    with pytest.raises(EstimatorError, match=r"depletion \(step 1\)"):
        pf.pf_step(ps, complex(math.nan, 0.0), spec, get_constellation("qam4"),
                   ChannelParams(10.0))


def test_blind_entropy_agrees_with_trellis():
    spec = wiener_spec(0.1)
    c = get_constellation("qam4")
    ch = ChannelParams.from_db(10.0)
    tr = generate_trace(spec, c, ch, 200, 0)
    blind, _ = trellis_log_pred(tr, c, ch, TrellisGrid(2048, 0.1))
    run = pf.run_pf(tr, spec, c, ch, 2 ** 16, 10)
    assert -run.log_pred_like.mean() / LN2 == pytest.approx(-blind.mean() / LN2, abs=0.02)


def test_doubling_particles_within_stderr():
    spec = sm(0.1)
    c = get_constellation("qam4")
    ch = ChannelParams.from_db(9.0)
    tr = generate_trace(spec, c, ch, 11_000, 12)
    h = [-pf.run_pf(tr, spec, c, ch, Np, 3).log_pred_like[1000:] / LN2 for Np in (2048, 4096)]
    _, se, _ = batch_means(h[1])
    assert abs(h[0].mean() - h[1].mean()) < se
