"""Parameter sweeps, seeding, result rows and convergence checks.

A sweep is a grid over modulation, SNR, gamma and repeat. Each grid point
("unit") simulates one trace and computes the lower bound once, the blind
entropy term once and one upper bound per tracker, so rows for different
trackers of a unit share their trace. Units run independently, optionally in
a process pool, and rows come back sorted by their coordinates.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

from .bounds import (BATCH, BURN_IN, DEFAULT_NP, DEFAULT_QUAD_NODES, BoundEstimate,
                     TrackerChoice, blind_entropy_series, lower_bound,
                     tracker_posteriors, upper_bound)
from .ekf import run_ekf
from .exceptions import ConfigError, EstimatorError, NonPSDError
from .model import (ArmaSpec, ChannelParams, build_from_zero_pole, child_seed,
                    generate_trace, get_constellation, wiener_spec)

SM_ZEROS = ((0.9937, 1), (0.7286, 2))
SM_POLES = (0.9999,)
DEFAULT_SNR_DB = tuple(float(s) for s in range(0, 22, 3))
DEFAULT_GAMMAS = (0.05, 0.15)
MIN_SAMPLES = 10_000

CSV_COLUMNS = (
    "model_id", "modulation", "snr_db", "gamma", "tracker", "n", "burn_in",
    "np_blind", "quad_nodes", "seed", "lb", "lb_se", "ub", "ub_se", "h_y",
    "h_y_given_xs", "d_term", "hx", "hx_given_y", "status", "wall_ms",
)

__all__ = ["SweepConfig", "ResultRow", "run_sweep", "run_unit", "unit_seed",
           "build_spec", "write_csv", "rows_to_csv", "ConvergenceReport",
           "convergence_report", "CSV_COLUMNS"]


def build_spec(zeros, poles, gamma: float) -> ArmaSpec:
    """Filter from zero/pole lists; both empty means ``H(z) = 1``."""
    if not zeros and not poles:
        return wiener_spec(gamma)
    return build_from_zero_pole([tuple(z) for z in zeros], list(poles), gamma)


@dataclass(frozen=True)
class SweepConfig:
    """Everything that determines a sweep's output.

    ``zeros`` are ``(c, d)`` pairs for factors ``1 - c z^-d``; ``poles`` are
    single-delay pole locations. ``trackers`` accepts ``"kalman"``,
    ``"particle"`` or ``"particle:<Np>"``.
    """

    model_id: str = "sm"
    zeros: tuple = SM_ZEROS
    poles: tuple = SM_POLES
    modulations: tuple = ("qam4", "qam16")
    snr_db: tuple = DEFAULT_SNR_DB
    gammas: tuple = DEFAULT_GAMMAS
    n: int = 200_000
    burn_in: int = BURN_IN
    batch: int = BATCH
    np_blind: int = DEFAULT_NP
    trackers: tuple = ("kalman", "particle")
    quad_nodes: int = DEFAULT_QUAD_NODES
    master_seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        norm = {
            "zeros": tuple((float(c), int(d)) for c, d in self.zeros),
            "poles": tuple(float(p) for p in self.poles),
            "modulations": tuple(str(m) for m in _as_tuple(self.modulations)),
            "snr_db": tuple(float(s) for s in _as_tuple(self.snr_db)),
            "gammas": tuple(float(g) for g in _as_tuple(self.gammas)),
            "trackers": tuple(str(TrackerChoice.parse(t)) for t in _as_tuple(self.trackers)),
        }
        for k, v in norm.items():
            object.__setattr__(self, k, v)
        if not (self.modulations and self.snr_db and self.gammas and self.trackers):
            raise ConfigError("modulations, snr_db, gammas and trackers must be non-empty")
        if self.n <= self.burn_in + MIN_SAMPLES:
            raise ConfigError(f"n must exceed burn_in + {MIN_SAMPLES}, "
                              f"got n={self.n}, burn_in={self.burn_in}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.np_blind < 2:
            raise ConfigError("np_blind must be >= 2")
        if self.quad_nodes < 8:
            raise ConfigError("quad_nodes must be >= 8")
        for m in self.modulations:
            try:
                get_constellation(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            for g in self.gammas:
                build_spec(self.zeros, self.poles, g)
        except ValueError as exc:
            raise ConfigError(f"invalid model: {exc}") from None

    def units(self):
        """Grid points ``(modulation, snr_db, gamma, repeat)`` in canonical order."""
        return [(m, s, g, r) for m in self.modulations for s in self.snr_db
                for g in self.gammas for r in range(self.repeats)]


def _as_tuple(v):
    if isinstance(v, (str, bytes)) or not hasattr(v, "__iter__"):
        return (v,)
    return tuple(v)


@dataclass(frozen=True)
class ResultRow:
    """One CSV row. Values are NaN where the estimate failed."""

    model_id: str
    modulation: str
    snr_db: float
    gamma: float
    tracker: str
    n: int
    burn_in: int
    np_blind: int
    quad_nodes: int
    seed: int
    lb: float = math.nan
    lb_se: float = math.nan
    ub: float = math.nan
    ub_se: float = math.nan
    h_y: float = math.nan
    h_y_given_xs: float = math.nan
    d_term: float = math.nan
    hx: float = math.nan
    hx_given_y: float = math.nan
    status: str = "ok"
    wall_ms: float | None = None
    repeat: int = field(default=0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def sort_key(self):
        return (self.model_id, self.modulation, self.snr_db, self.gamma, self.repeat,
                self.tracker)


def unit_seed(master_seed: int, model_id: str, modulation: str, snr_db: float,
              gamma: float, repeat: int) -> int:
    """Seed for one grid point, from a hash of its coordinates.

    The tracker is not part of the key so all trackers of a point see the
    same trace.
    """
    key = f"{int(master_seed)}|{model_id}|{modulation}|{float(snr_db)!r}|{float(gamma)!r}|{int(repeat)}"
    h = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    return child_seed(h)


def _status(exc: Exception) -> str:
    """Failure taxonomy written to the ``status`` column."""
    msg = str(exc)
    if isinstance(exc, NonPSDError):
        kind = "non_psd"
    elif "depletion" in msg:
        kind = "depletion"
    elif "dispersed" in msg:
        kind = "dispersed"
    elif "insufficient samples" in msg:
        kind = "insufficient_samples"
    elif isinstance(exc, EstimatorError):
        kind = "estimator_error"
    else:
        kind = "error"
    step = getattr(exc, "step", None)
    return f"failed:{kind}" + (f"@{step}" if step is not None else "")


def run_unit(cfg: SweepConfig, modulation: str, snr_db: float, gamma: float,
             repeat: int = 0, record_time: bool = False) -> list[ResultRow]:
    """All tracker rows for one grid point."""
    seed = unit_seed(cfg.master_seed, cfg.model_id, modulation, snr_db, gamma, repeat)
    base = dict(model_id=cfg.model_id, modulation=modulation, snr_db=snr_db,
                gamma=gamma, n=cfg.n, burn_in=cfg.burn_in, np_blind=cfg.np_blind,
                quad_nodes=cfg.quad_nodes, seed=seed, repeat=repeat)
    t0 = time.perf_counter()
    spec = build_spec(cfg.zeros, cfg.poles, gamma)
    const = get_constellation(modulation)
    channel = ChannelParams.from_db(snr_db)
    trace = generate_trace(spec, const, channel, cfg.n, seed)
    lb_vals = {}
    hy = None
    shared_status = "ok"
    try:
        ekf = run_ekf(trace, spec, channel)
        lb = lower_bound(trace, spec, const, channel, cfg.quad_nodes, cfg.burn_in,
                         cfg.batch, ekf=ekf)
        lb_vals = dict(lb=lb.value, lb_se=lb.stderr, **lb.components)
        hy = blind_entropy_series(trace, spec, const, channel, cfg.np_blind,
                                  child_seed(seed, 1))
    except (EstimatorError, ValueError) as exc:
        shared_status = _status(exc)
    shared_ms = (time.perf_counter() - t0) * 1e3

    rows = []
    for tname in cfg.trackers:
        t1 = time.perf_counter()
        vals = dict(lb_vals)
        status = shared_status
        if hy is not None:
            try:
                post = tracker_posteriors(trace, spec, const, channel, tname,
                                          child_seed(seed, 2), ekf=ekf)
                ub = upper_bound(trace, spec, const, channel, tname, cfg.np_blind, seed,
                                 cfg.burn_in, cfg.batch, h_y_series=hy, posteriors=post)
                vals.update(ub=ub.value, ub_se=ub.stderr, **ub.components)
            except (EstimatorError, ValueError) as exc:
                status = _status(exc)
        wall = shared_ms + (time.perf_counter() - t1) * 1e3 if record_time else None
        rows.append(ResultRow(tracker=tname, status=status, wall_ms=wall, **base, **vals))
    return rows


def _unit_task(args):
    return run_unit(*args)


def run_sweep(cfg: SweepConfig, workers: int = 1, record_time: bool = False,
              progress=None) -> list[ResultRow]:
    """Run every grid point; rows sorted by coordinates.

    ``progress``, if given, is called with each finished unit's rows.
    Wall times are left empty unless ``record_time`` so that output files
    are reproducible byte for byte.
    """
    tasks = [(cfg, m, s, g, r, record_time) for m, s, g, r in cfg.units()]
    rows = []
    if workers <= 1 or len(tasks) == 1:
        for t in tasks:
            out = _unit_task(t)
            rows.extend(out)
            if progress:
                progress(out)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for out in pool.map(_unit_task, tasks):
                rows.extend(out)
                if progress:
                    progress(out)
    return sorted(rows, key=ResultRow.sort_key)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    """Render rows with the fixed column order; floats use ``repr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path) -> list[dict]:
    """Rows of a results file as dicts of strings."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class ConvergenceReport:
    """Pairwise differences against their combined standard error.

    ``ratios[i] = |delta[i]| / sigma[i]``; ``flagged`` is set when any ratio
    exceeds ``threshold``.
    """

    split: str
    quantity: str
    deltas: tuple
    sigmas: tuple
    threshold: float = 3.0

    @property
    def ratios(self) -> tuple:
        return tuple(abs(d) / s if s > 0 else (0.0 if d == 0 else math.inf)
                     for d, s in zip(self.deltas, self.sigmas))

    @property
    def flagged(self) -> bool:
        return any(r > self.threshold for r in self.ratios)


def _value_se(item, quantity):
    if isinstance(item, BoundEstimate):
        return item.value, item.stderr
    if isinstance(item, ResultRow):
        return getattr(item, quantity), getattr(item, f"{quantity}_se")
    v, s = item
    return float(v), float(s)


def convergence_report(items, split: str = "halves", quantity: str = "ub",
                       threshold: float = 3.0) -> ConvergenceReport:
    """Compare estimates that should agree.

    Parameters
    ----------
    items
        For ``split="halves"``, one or more :class:`BoundEstimate`; each is
        split into its first and second half of batches. Otherwise a
        sequence of at least two estimates (:class:`BoundEstimate`,
        :class:`ResultRow` or ``(value, stderr)``), compared consecutively,
        e.g. at ``n`` and ``2n`` for ``"doubling_n"``.
    quantity
        ``"lb"`` or ``"ub"``, used to read :class:`ResultRow` items.
    """
    deltas, sigmas = [], []
    if split == "halves":
        if isinstance(items, BoundEstimate):
            items = [items]
        for est in items:
            (v1, s1), (v2, s2) = est.halves
            deltas.append(v2 - v1)
            sigmas.append(math.hypot(s1, s2))
    elif split in ("doubling_n", "doubling_np", "repeats"):
        pairs = [_value_se(it, quantity) for it in items]
        if len(pairs) < 2:
            raise ValueError("need at least two estimates to compare")
        for (v1, s1), (v2, s2) in zip(pairs, pairs[1:]):
            deltas.append(v2 - v1)
            sigmas.append(math.hypot(s1, s2))
    else:
        raise ValueError(f"unknown split {split!r}")
    return ConvergenceReport(split, quantity, tuple(deltas), tuple(sigmas), threshold)


def config_replace(cfg: SweepConfig, **changes) -> SweepConfig:
    """``dataclasses.replace`` that ignores None values."""
    changes = {k: v for k, v in changes.items() if v is not None}
    known = {f.name for f in fields(SweepConfig)}
    unknown = set(changes) - known
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    return replace(cfg, **changes)


def summary_line(row: ResultRow) -> str:
    """Human-readable one-liner for a row."""
    head = (f"{row.model_id} {row.modulation} snr={row.snr_db:g}dB gamma={row.gamma:g} "
            f"tracker={row.tracker}")
    if not row.ok:
        return f"{head}: {row.status}"
    return (f"{head}: LB={row.lb:.4f}+-{row.lb_se:.4f} UB={row.ub:.4f}+-{row.ub_se:.4f} "
            f"[h_y={row.h_y:.4f} h_y|xs={row.h_y_given_xs:.4f} d={row.d_term:.4f} "
            f"H(X)={row.hx:.4f} H(X|Y)={row.hx_given_y:.4f}]")

