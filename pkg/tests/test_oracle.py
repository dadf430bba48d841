import dataclasses
import math

import numpy as np
import pytest
from scipy import integrate

from pnbounds import oracle
from pnbounds.exceptions import EstimatorError
from pnbounds.model import ChannelParams, generate_trace, get_constellation, wiener_spec

QAM4 = get_constellation("qam4")
QAM16 = get_constellation("qam16")
# regression constant: quadrature value at snr 4.0, confirmed by Monte Carlo
# (1.82632 +- 0.00033 with 4e6 samples) and by the BPSK integral below
QAM4_SNR4 = 1.8256445715490848


def bpsk_pair_mi(snr):
    """4-QAM as two independent binary channels; 1-D integral per quadrature."""
    a = 1 / math.sqrt(2)
    s2 = 0.5 / snr

    def f(y):
        g = math.exp(-(y - a) ** 2 / (2 * s2)) / math.sqrt(2 * math.pi * s2)
        return g * math.log2(1 + math.exp(-2 * a * y / s2))

    lo, hi = a - 40 * math.sqrt(s2), a + 40 * math.sqrt(s2)
    val, _ = integrate.quad(f, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-13, points=[0, a])
    return 2 * (1 - val)


@pytest.mark.parametrize("snr", [0.25, 1.0, 4.0, 20.0])
def test_quadrature_matches_binary_decomposition(snr):
    assert oracle.awgn_mi(QAM4, ChannelParams(snr)) == pytest.approx(bpsk_pair_mi(snr),
                                                                     abs=1e-9)


def test_awgn_limits():
    assert oracle.awgn_mi(QAM4, ChannelParams(1e-6)) < 1e-4
    assert oracle.awgn_mi(QAM4, ChannelParams(1e6)) == pytest.approx(2.0, abs=1e-6)
    assert oracle.awgn_mi(QAM16, ChannelParams(1e6)) == pytest.approx(4.0, abs=1e-6)


def test_awgn_regression_constant():
    assert oracle.awgn_mi(QAM4, ChannelParams(4.0)) == pytest.approx(QAM4_SNR4, abs=1e-12)
    assert oracle.awgn_mi(QAM4, ChannelParams(4.0), method="both") == pytest.approx(QAM4_SNR4)


@pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
def test_monte_carlo_agrees_for_16qam(snr_db):
    ch = ChannelParams.from_db(snr_db)
    q = oracle.awgn_mi(QAM16, ch)
    mc, se = oracle.awgn_mi_monte_carlo(QAM16, ch, n=400_000, seed=2)
    assert abs(q - mc) < 4 * se + 1e-4


def test_disagreement_raises(monkeypatch):
    monkeypatch.setattr(oracle, "awgn_mi_monte_carlo", lambda *a, **k: (0.0, 0.0))
    with pytest.raises(EstimatorError, match="disagree"):
        oracle.awgn_mi(QAM4, ChannelParams(4.0), method="both")
    with pytest.raises(ValueError):
        oracle.awgn_mi(QAM4, ChannelParams(4.0), method="exact")


def test_fixtures_match_recomputation():
    fx = oracle.load_fixtures()
    assert fx["generated_by"] and fx["numpy"] and fx["method"]
    for row in fx["awgn_mi"][::7]:
        c = get_constellation(row["modulation"])
        assert oracle.awgn_mi(c, ChannelParams.from_db(row["snr_db"])) == pytest.approx(
            row["bits"], abs=1e-12)
        assert abs(row["bits"] - row["monte_carlo"]) < 5 * row["monte_carlo_stderr"] + 1e-4
    assert oracle.fixture_awgn_mi("qam4", 6.0) == pytest.approx(1.8237609091772091)
    with pytest.raises(KeyError):
        oracle.fixture_awgn_mi("qam4", 6.5)


@pytest.mark.parametrize("bins,gamma", [(64, 0.3), (512, 0.1), (1024, 1e-6), (2048, 2.0)])
def test_kernel_rows_are_stochastic(bins, gamma):
    K = oracle.TrellisGrid(bins, gamma).kernel_matrix()
    assert K.shape == (bins, bins)
    assert np.all(K >= 0)
    assert np.max(np.abs(K.sum(axis=1) - 1.0)) <= 1e-12
    # circulant
    np.testing.assert_array_equal(np.roll(K[0], 5), K[5])


def test_kernel_integrates_wrapped_gaussian():
    g = oracle.TrellisGrid(256, 0.2)
    k = g.kernel
    off = np.angle(np.exp(1j * g.centers))
    mean = np.sum(k * off)
    var = np.sum(k * off ** 2)
    assert abs(mean) < 1e-12
    # bin-averaging adds width^2 / 12 to the variance
    assert var == pytest.approx(0.04 + g.width ** 2 / 12, rel=1e-6)


def test_grid_needs_64_bins():
    with pytest.raises(ValueError):
        oracle.TrellisGrid(32, 0.1)


def test_trellis_degenerate_noise_matches_awgn():
    ch = ChannelParams.from_db(6.0)
    r = oracle.trellis_rate(1e-6, QAM4, ch, 512, 20_000, 1)
    assert r == pytest.approx(oracle.awgn_mi(QAM4, ch), abs=0.02)


def test_trellis_bins_refinement():
    ch = ChannelParams.from_db(6.0)
    tr = generate_trace(wiener_spec(0.1), QAM4, ch, 20_000, 2)
    a = oracle.trellis_rate(0.1, QAM4, ch, 512, tr.n, 0, trace=tr)
    b = oracle.trellis_rate(0.1, QAM4, ch, 1024, tr.n, 0, trace=tr)
    assert abs(a - b) < 0.01


def test_trellis_invariant_under_bin_rotation():
    ch = ChannelParams.from_db(8.0)
    bins = 256
    tr = generate_trace(wiener_spec(0.1), QAM4, ch, 3000, 3)
    r = 37
    shift = 2 * math.pi * r / bins
    states = tr.states.copy()
    states[:, 0] = np.mod(states[:, 0] + shift, 2 * math.pi)
    rotated = dataclasses.replace(tr, states=states, y=tr.y * np.exp(1j * shift))
    a = oracle.trellis_rate(0.1, QAM4, ch, bins, tr.n, 0, burn_in=0, trace=tr)
    b = oracle.trellis_rate(0.1, QAM4, ch, bins, tr.n, 0, burn_in=0, trace=rotated)
    assert a == pytest.approx(b, abs=1e-10)


def test_trellis_data_aided_never_below_blind_on_average():
    ch = ChannelParams.from_db(3.0)
    tr = generate_trace(wiener_spec(0.1), QAM16, ch, 5000, 4)
    s = oracle.trellis_series(tr, QAM16, ch, oracle.TrellisGrid(256, 0.1))
    assert s.mean() > 0
    assert s.mean() < QAM16.entropy()


def test_trellis_underflow_raises():
    ch = ChannelParams.from_db(6.0)
    tr = generate_trace(wiener_spec(0.1), QAM4, ch, 50, 5)
    bad = dataclasses.replace(tr, y=np.full(tr.n, complex(math.nan, 0)))
    with pytest.raises(EstimatorError, match="underflow"):
        oracle.trellis_series(bad, QAM4, ch, oracle.TrellisGrid(64, 0.1))

