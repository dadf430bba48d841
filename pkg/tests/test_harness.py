import math

import pytest

from pnbounds import harness
from pnbounds.bounds import BoundEstimate
from pnbounds.exceptions import ConfigError, EstimatorError, NonPSDError
from pnbounds.harness import (CSV_COLUMNS, ConvergenceReport, ResultRow, SweepConfig,
                              config_replace, convergence_report, rows_to_csv, run_sweep,
                              run_unit, unit_seed)


def small(**kw):
    base = dict(modulations=("qam4",), snr_db=(6.0,), gammas=(0.05,), n=11_001,
                np_blind=64, trackers=("kalman", "particle:64"))
    base.update(kw)
    return SweepConfig(**base)


def test_defaults_describe_the_sm_grid():
    cfg = SweepConfig()
    assert cfg.snr_db == (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0)
    assert cfg.gammas == (0.05, 0.15) and cfg.modulations == ("qam4", "qam16")
    assert cfg.trackers == ("kalman", "particle:4096")
    assert len(cfg.units()) == 32
    spec = harness.build_spec(cfg.zeros, cfg.poles, 0.1)
    assert spec.dim == 4
    assert harness.build_spec((), (), 0.1).dim == 2


@pytest.mark.parametrize("kw", [
    dict(n=11_000), dict(repeats=0), dict(np_blind=1), dict(quad_nodes=4),
    dict(modulations=("psk8",)), dict(poles=(1.2,)), dict(snr_db=()),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigError):
        small(**kw)


def test_scalars_are_normalized():
    cfg = small(snr_db=3, gammas=0.1, modulations="qam16", trackers="particle:128")
    assert cfg.snr_db == (3.0,) and cfg.gammas == (0.1,)
    assert cfg.modulations == ("qam16",) and cfg.trackers == ("particle:128",)


def test_config_replace():
    cfg = small()
    assert config_replace(cfg, n=None, master_seed=4).master_seed == 4
    with pytest.raises(ConfigError, match="unknown"):
        config_replace(cfg, colour="red")


def test_unit_seed_depends_on_coordinates_only():
    a = unit_seed(0, "sm", "qam4", 6.0, 0.05, 0)
    assert a == unit_seed(0, "sm", "qam4", 6, 0.05, 0)
    others = {unit_seed(0, "sm", "qam4", 9.0, 0.05, 0), unit_seed(1, "sm", "qam4", 6.0, 0.05, 0),
              unit_seed(0, "sm", "qam16", 6.0, 0.05, 0), unit_seed(0, "sm", "qam4", 6.0, 0.15, 0),
              unit_seed(0, "sm", "qam4", 6.0, 0.05, 1), unit_seed(0, "w", "qam4", 6.0, 0.05, 0)}
    assert a not in others and len(others) == 6


def test_grid_order_does_not_change_results():
    a = run_sweep(small(snr_db=(3.0, 6.0), trackers=("kalman",)))
    b = run_sweep(small(snr_db=(6.0, 3.0), trackers=("kalman",)))
    assert rows_to_csv(a) == rows_to_csv(b)
    one = run_unit(small(trackers=("kalman",)), "qam4", 6.0, 0.05)
    assert one[0] == a[1]


@pytest.fixture(scope="module")
def one_point():
    return run_sweep(small())


def test_one_point_grid(one_point):
    rows = one_point
    assert [r.tracker for r in rows] == ["kalman", "particle:64"]
    assert all(r.ok for r in rows)
    # trackers share the trace, the lower bound and the blind entropy
    assert rows[0].seed == rows[1].seed and rows[0].lb == rows[1].lb
    assert rows[0].h_y == rows[1].h_y
    assert rows[0].wall_ms is None


def test_csv_layout(one_point):
    text = rows_to_csv(one_point)
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS) and lines[-1] == ""
    assert len(lines) == 4
    fields = dict(zip(CSV_COLUMNS, lines[1].split(",")))
    assert fields["status"] == "ok" and fields["wall_ms"] == ""
    assert float(fields["lb"]) == one_point[0].lb


def test_sweep_is_reproducible(one_point, tmp_path):
    again = run_sweep(small())
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    harness.write_csv(one_point, p1)
    harness.write_csv(again, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = harness.read_csv(p1)
    assert back[0]["tracker"] == "kalman" and float(back[1]["ub"]) == one_point[1].ub


def test_record_time_fills_wall_ms():
    rows = run_unit(small(trackers=("kalman",)), "qam4", 6.0, 0.05, record_time=True)
    assert rows[0].wall_ms > 0


def test_failed_tracker_is_flagged_without_aborting(monkeypatch):
    real = harness.upper_bound

    def flaky(trace, spec, const, channel, tracker, *a, **k):
        if str(tracker).startswith("particle"):
            raise EstimatorError("particle depletion", step=17)
        return real(trace, spec, const, channel, tracker, *a, **k)

    monkeypatch.setattr(harness, "upper_bound", flaky)
    rows = run_sweep(small())
    assert rows[0].ok
    assert rows[1].status == "failed:depletion@17"
    assert math.isnan(rows[1].ub) and rows[1].lb == rows[0].lb
    fields = rows_to_csv(rows).split("\n")[2].split(",")
    assert fields[CSV_COLUMNS.index("ub")] == ""


@pytest.mark.parametrize("exc,status", [
    (NonPSDError("covariance", step=3), "failed:non_psd@3"),
    (EstimatorError("posterior too dispersed"), "failed:dispersed"),
    (EstimatorError("insufficient samples: 10 batches needed"), "failed:insufficient_samples"),
    (EstimatorError("other"), "failed:estimator_error"),
    (ValueError("bad"), "failed:error"),
])
def test_status_taxonomy(exc, status):
    assert harness._status(exc) == status


def test_shared_failure_marks_every_tracker(monkeypatch):
    def boom(*a, **k):
        raise NonPSDError("covariance not PSD", step=5)

    monkeypatch.setattr(harness, "run_ekf", boom)
    rows = run_unit(small(), "qam4", 6.0, 0.05)
    assert [r.status for r in rows] == ["failed:non_psd@5"] * 2
    assert all(math.isnan(r.lb) and math.isnan(r.ub) for r in rows)


def test_convergence_report_basics():
    same = BoundEstimate(1.0, 0.01, 1000, {}, ((1.0, 0.01), (1.0, 0.01)))
    rep = convergence_report(same)
    assert rep.deltas == (0.0,) and not rep.flagged
    rep = convergence_report([(1.0, 0.01), (1.1, 0.01), (1.1, 0.0)], "doubling_n")
    assert rep.ratios[0] == pytest.approx(0.1 / math.hypot(0.01, 0.01))
    assert rep.flagged and len(rep.deltas) == 2
    assert ConvergenceReport("x", "ub", (0.0,), (0.0,)).ratios == (0.0,)
    with pytest.raises(ValueError):
        convergence_report([(1.0, 0.1)], "repeats")
    with pytest.raises(ValueError):
        convergence_report([(1.0, 0.1)] * 2, "thirds")


def test_convergence_report_reads_rows(one_point):
    r = one_point[0]
    shifted = ResultRow(**{**r.__dict__, "ub": r.ub + 1.0})
    rep = convergence_report([r, shifted], "repeats", quantity="ub")
    assert rep.deltas[0] == pytest.approx(1.0) and rep.flagged
    assert not convergence_report([r, r], "repeats", quantity="lb").flagged


@pytest.mark.slow
def test_too_few_particles_is_flagged():
    # at 20 dB a 4-particle blind filter is badly biased; 4096 is not
    cfg = small(snr_db=(20.0,), gammas=(0.15,), trackers=("kalman",), n=21_000)
    rows = [run_sweep(config_replace(cfg, np_blind=np_))[0] for np_ in (4, 4096)]
    assert convergence_report(rows, "doubling_np").flagged
