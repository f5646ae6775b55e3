"""Experiment protocols: response curves, transients, vibration sweeps.

Vibration frequencies are normalized by the operating mirror frequency
``f_m`` (the settled open-loop frequency, equal to ``f_ref`` for a calibrated
parameter set). Response-curve frequencies are normalized mirror
frequencies, i.e. half the actuation frequency over ``f_ref``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .analysis import (ErrorStats, STATS_FIELDS, WindowTooShortError, analytic_energy_series,
                       coupling_coeffs, error_stats, fit_tone, imposed_trace,
                       numeric_energy_series, steady_window, write_stats_csv)
from .control import DEFAULT_GAINS, DriveSource, LockLostError, PllGains, run_pll_loop
from .engine import (Checkpoint, DivergenceError, IntegrationError, IntegratorConfig,
                     TooFewCrossingsError, Trace, integrate, measure_cycles, settle)
from .model import MirrorParams, SimState, VibrationProfile, g_rms_to_peak

log = logging.getLogger(__name__)

__all__ = [
    "SweepSpec", "SweepResult", "ResponseCurve", "TransientReport", "MisalignmentCheck",
    "EnergyCheck", "ProtocolError", "default_grid", "response_grid", "operating_point",
    "run_response_curve", "hysteresis_points", "backbone_curve", "run_transient",
    "run_frequency_sweep", "run_misalignment_check", "run_energy_check",
]


class ProtocolError(RuntimeError):
    """An experiment precondition does not hold."""


# ---------------------------------------------------------------------------
# operating point
# ---------------------------------------------------------------------------

_SETTLED: dict = {}


def _fingerprint(params: MirrorParams, config: IntegratorConfig) -> str:
    h = hashlib.sha1()
    for key in ("inertia", "mass", "com_offset", "theta_ref", "f_ref", "hv_voltage", "duty"):
        h.update(repr(getattr(params, key)).encode())
    for c in (params.stiffness, params.damping_base, params.damping_amp, params.cap_deriv):
        h.update(c.breaks.tobytes())
        h.update(c.coeffs.tobytes())
        h.update(c.parity.encode())
    h.update(repr(config).encode())
    return h.hexdigest()


def operating_point(params: MirrorParams, config: Optional[IntegratorConfig] = None,
                    *, f_norm: float = 1.0, use_cache: bool = True) -> Checkpoint:
    """Settled open-loop state at ``f_norm``, cached per parameter set."""
    config = config or IntegratorConfig()
    key = (_fingerprint(params, config), float(f_norm))
    if use_cache and key in _SETTLED:
        return _SETTLED[key]
    ck = settle(params, f_norm, config=config)
    _SETTLED[key] = ck
    return ck


# ---------------------------------------------------------------------------
# response curves
# ---------------------------------------------------------------------------

@dataclass
class ResponseCurve:
    """Steady amplitude per step of a quasi-static drive-frequency sweep.

    ``amplitude`` is normalized by ``theta_ref``; it is 0 on the rest branch
    and ``inf`` where the oscillation left the curve domain. ``status`` is
    one of ``settled``, ``zero``, ``growing`` or ``diverged``.
    """

    direction: str
    f_norm: np.ndarray
    amplitude: np.ndarray
    status: list
    f_ref: float

    @property
    def jumps(self) -> list[tuple[float, float, float, float]]:
        """Adjacent steps whose amplitude changes by more than 20 %.

        Entries are ``(f_from, f_to, amp_from, amp_to)`` in sweep order.
        """
        order = np.argsort(self.f_norm)
        if self.direction == "down":
            order = order[::-1]
        f, a = self.f_norm[order], self.amplitude[order]
        out = []
        for i in range(len(f) - 1):
            lo, hi = sorted((a[i], a[i + 1]))
            if hi > 0 and (math.isinf(hi) or (hi - lo) > 0.2 * hi):
                out.append((float(f[i]), float(f[i + 1]), float(a[i]), float(a[i + 1])))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# mirrorvib response-curve v1\n")
            w = csv.writer(fh)
            w.writerow(["direction", "f_mirror_norm", "f_act[Hz]", "amplitude_norm", "status"])
            for f, a, s in zip(self.f_norm, self.amplitude, self.status):
                w.writerow([self.direction, f"{f:.6f}", f"{2 * f * self.f_ref:.6f}",
                            f"{a:.9g}", s])


def response_grid(lo=0.94, hi=1.12, step=0.0025) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def _cycle_peaks(trace: Trace, n: int) -> np.ndarray:
    return np.abs(trace.extrema[-n:, 1]) if len(trace.extrema) else np.zeros(0)


def run_response_curve(params: MirrorParams, direction: str = "up", grid=None, *,
                       min_hold: int = 300, max_hold: int = 4000, block: int = 100,
                       tol: float = 1e-4, config: Optional[IntegratorConfig] = None,
                       seed: float = 1e-3) -> ResponseCurve:
    """Stepped open-loop sweep of the drive frequency.

    Each step holds the drive frequency for at least ``min_hold`` mirror
    cycles and at most ``max_hold``, stopping early once the block-mean
    amplitude changes by less than ``tol`` (relative). A step that ends on
    a settled oscillation hands its state on to the next step with a
    phase-continuous drive. Any other step (rest branch, still growing,
    diverged) restarts the next one from ``seed*theta_ref`` at rest, which
    stands in for ambient noise.
    """
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    grid = response_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    config = replace(config or IntegratorConfig(), store_samples=False)
    steps = grid if direction == "up" else grid[::-1]
    floor = 0.01 * params.theta_ref
    t = 0.0
    ck: Optional[Checkpoint] = None
    amps, status = [], []
    for f in steps:
        f_m = f * params.f_ref
        drive = DriveSource.open_loop(2.0 * f_m, params.hv_voltage, params.duty, first_edge=t)
        if ck is None:
            state = SimState(t, seed * params.theta_ref, 0.0)
        else:
            state = ck.state
        held, prev, amp, st = 0, -1.0, 0.0, "growing"
        try:
            while held < max_hold:
                tr = integrate(params, state, drive, VibrationProfile.none(),
                               (t, t + block / f_m), config, checkpoint=ck)
                ck, state, t = tr.final, tr.final.state, tr.final.t
                held += block
                peaks = _cycle_peaks(tr, 2 * block)
                amp = float(peaks.mean()) if peaks.size else 0.0
                if held >= min_hold:
                    if amp < floor and amp <= prev:
                        st = "zero"
                        break
                    if amp >= floor and abs(amp - prev) < tol * amp:
                        st = "settled"
                        break
                prev = amp
        except DivergenceError as exc:
            st, amp = "diverged", math.inf
            t = exc.last_time if exc.last_time is not None else t
        if st == "zero":
            amp = 0.0
        amps.append(amp / params.theta_ref if math.isfinite(amp) else math.inf)
        status.append(st)
        if st != "settled":
            ck = None
    amps_a = np.array(amps)
    if direction == "down":
        amps_a, status = amps_a[::-1], status[::-1]
    return ResponseCurve(direction, grid.copy(), amps_a, list(status), params.f_ref)


def hysteresis_points(up: ResponseCurve, down: ResponseCurve, rel_tol: float = 0.2) -> np.ndarray:
    """Grid frequencies where the up and down sweeps disagree.

    Two steps agree when both are on the rest branch, both diverged, or
    their finite amplitudes differ by at most ``rel_tol`` of the larger.
    """
    if not np.array_equal(up.f_norm, down.f_norm):
        raise ValueError("curves must share the grid")
    out = []
    for f, a, b in zip(up.f_norm, up.amplitude, down.amplitude):
        if math.isinf(a) and math.isinf(b):
            continue
        hi = max(a, b)
        if hi == 0.0:
            continue
        if math.isinf(hi) or abs(a - b) > rel_tol * hi:
            out.append(f)
    return np.array(out)


def backbone_curve(params: MirrorParams, amplitudes, *, cycles: int = 20,
                   config: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Free-oscillation frequency (normalized by ``f_ref``) per start amplitude.

    Each entry releases the undriven mirror from ``theta = A*theta_ref`` at
    rest and averages the cycle frequency over ``cycles`` periods.
    """
    config = replace(config or IntegratorConfig(), store_samples=False)
    drive = DriveSource.open_loop(2.0 * params.f_ref, hv_voltage=0.0)
    out = []
    for a in np.asarray(amplitudes, dtype=float):
        f_lin = params.linear_frequency()
        tr = integrate(params, SimState(0.0, a * params.theta_ref, 0.0), drive,
                       VibrationProfile.none(), (0.0, cycles / f_lin), config)
        cy = measure_cycles(tr)
        out.append(float(np.mean(cy.frequencies)) / params.f_ref)
    return np.array(out)


# ---------------------------------------------------------------------------
# vibration sweeps
# ---------------------------------------------------------------------------

def default_grid(lo: float = 0.42, hi: float = 2.09, step: float = 0.01,
                 fine: float = 0.0005, centers=(1.0, 2.0), halfwidth: float = 0.05) -> np.ndarray:
    """Base grid with step ``step``, refined to ``fine`` within ``halfwidth`` of each center."""
    pts = [lo + step * np.arange(int(round((hi - lo) / step)) + 1)]
    for c in centers:
        a, b = max(lo, c - halfwidth), min(hi, c + halfwidth)
        if a < b:
            pts.append(a + fine * np.arange(int(round((b - a) / fine)) + 1))
    g = np.unique(np.round(np.concatenate(pts), 10))
    return g[(g >= lo - 1e-12) & (g <= hi + 1e-12)]


@dataclass(frozen=True)
class SweepSpec:
    """A single-tone vibration frequency sweep.

    Window parameters follow :func:`mirrorvib.analysis.steady_window`;
    ``max_cycles`` caps skip and measurement length for tones very close to
    a coupling band, where the beat period diverges.
    """

    axis: str = "ty"
    control: str = "open_loop"
    grid: Optional[np.ndarray] = field(default=None, compare=False)
    g_rms: float = 2.0
    misalignment: float = 0.0
    gains: PllGains = DEFAULT_GAINS
    skip_cycles: int = 200
    skip_beats: int = 5
    min_beats: int = 20
    min_cycles: int = 1000
    max_cycles: Optional[int] = 20000
    output: Optional[str] = None

    def __post_init__(self):
        if self.axis not in ("ty", "tz"):
            raise ValueError("axis must be 'ty' or 'tz'")
        if self.control not in ("open_loop", "pll"):
            raise ValueError("control must be 'open_loop' or 'pll'")
        if not (math.isfinite(self.g_rms) and self.g_rms > 0):
            raise ValueError("acceleration must be > 0")
        g = self.frequencies
        if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0) or np.any(g <= 0):
            raise ValueError("grid must be positive and strictly increasing")

    @property
    def frequencies(self) -> np.ndarray:
        return default_grid() if self.grid is None else np.asarray(self.grid, dtype=float)

    @property
    def peak_acceleration(self) -> float:
        return g_rms_to_peak(self.g_rms)


def _band(f_norm: float) -> int:
    return 1 if abs(f_norm - 1.0) <= abs(f_norm - 2.0) else 2


@dataclass
class SweepResult:
    """Per-point statistics of a sweep plus located features.

    ``rows`` holds one dict per grid point with keys from
    :data:`mirrorvib.analysis.STATS_FIELDS` and ``tracking``, the relative
    offset of the mean mirror frequency from the tone (divided by its band
    order).
    """

    spec: SweepSpec
    f_m: float
    rows: list

    @property
    def f_norm(self) -> np.ndarray:
        return np.array([r["f_norm"] for r in self.rows])

    def column(self, key: str) -> np.ndarray:
        return np.array([np.nan if r.get(key) is None else r[key] for r in self.rows], dtype=float)

    @property
    def std_amplitude(self) -> np.ndarray:
        return self.column("std_amplitude_pct")

    @property
    def std_frequency(self) -> np.ndarray:
        return self.column("std_frequency_pct")

    def locked(self, tol: float = 1e-5) -> np.ndarray:
        """Grid points where the mirror follows the tone to ``tol`` relative."""
        tr = self.column("tracking")
        return np.isfinite(tr) & (np.abs(tr) < tol)

    def peak(self, band: int, key: str = "std_amplitude_pct", halfwidth: float = 0.1):
        """Largest value of ``key`` within ``halfwidth`` of the band center."""
        f, v = self.f_norm, self.column(key)
        sel = (np.abs(f - band) <= halfwidth) & np.isfinite(v)
        if not np.any(sel):
            return None
        i = np.flatnonzero(sel)[np.argmax(v[sel])]
        return float(f[i]), float(v[i])

    def features(self, halfwidth: float = 0.1) -> dict:
        """Peaks, notches and lock-band edges bracketed by the grid."""
        f = self.f_norm
        sa = self.std_amplitude
        out = {"peaks": [], "notches": [], "lock_band": []}
        for c in (1, 2):
            sel = np.flatnonzero((np.abs(f - c) <= halfwidth) & np.isfinite(sa))
            if sel.size < 3:
                continue
            sides = {}
            for side, idx in ((-1, sel[f[sel] < c]), (1, sel[f[sel] > c])):
                if idx.size < 3:
                    continue
                j = idx[np.argmax(sa[idx])]
                if j in (idx[0], idx[-1]):
                    continue
                sides[side] = j
                out["peaks"].append({"band": c, "side": side, "f_norm": float(f[j]),
                                     "std_amplitude_pct": float(sa[j]),
                                     "bracket": [float(f[j - 1]), float(f[j + 1])]})
            if -1 in sides and 1 in sides:
                a, b = sides[-1], sides[1]
                inner = np.arange(a + 1, b)
                inner = inner[np.isfinite(sa[inner])]
                if inner.size >= 3:
                    j = inner[np.argmin(sa[inner])]
                    if j not in (inner[0], inner[-1]):
                        out["notches"].append({"band": c, "f_norm": float(f[j]),
                                               "std_amplitude_pct": float(sa[j]),
                                               "bracket": [float(f[j - 1]), float(f[j + 1])]})
            if self.spec.control == "pll":
                edges = self._lock_edges(c)
                if edges is not None:
                    out["lock_band"].append(edges)
        return out

    def _lock_edges(self, c: int, tol: float = 1e-5):
        f = self.f_norm
        lk = self.locked(tol)
        near = np.flatnonzero(lk & (np.abs(f - c) <= 0.05))
        if near.size == 0:
            return None
        j = near[np.argmin(np.abs(f[near] - c))]
        lo = j
        while lo - 1 >= 0 and lk[lo - 1]:
            lo -= 1
        hi = j
        while hi + 1 < len(f) and lk[hi + 1]:
            hi += 1
        if lo == 0 or hi == len(f) - 1:
            return None
        return {"band": c, "lower": [float(f[lo - 1]), float(f[lo])],
                "upper": [float(f[hi]), float(f[hi + 1])],
                "halfwidth": float(0.5 * (f[hi] - f[lo]))}

    def write(self, outdir, prefix: str = "sweep") -> tuple[Path, Path]:
        """``<prefix>.csv`` (one row per grid point) and ``<prefix>_summary.json``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        p_csv, p_js = outdir / f"{prefix}.csv", outdir / f"{prefix}_summary.json"
        with open(p_csv, "w", newline="") as fh:
            fh.write("# mirrorvib sweep v1\n")
            w = csv.DictWriter(fh, fieldnames=STATS_FIELDS + ("tracking",), extrasaction="ignore")
            w.writeheader()
            for r in sorted(self.rows, key=lambda r: r["f_norm"]):
                w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in w.fieldnames})
        summary = {
            "format": "mirrorvib sweep-summary v1",
            "axis": self.spec.axis, "control": self.spec.control,
            "g_rms": self.spec.g_rms, "misalignment_rad": self.spec.misalignment,
            "f_m_hz": self.f_m, "points": len(self.rows),
            "failed": [r["f_norm"] for r in self.rows if r["status"] != "ok"],
            "features": self.features(),
        }
        p_js.write_text(json.dumps(summary, indent=2))
        return p_csv, p_js


def _sweep_point(params, spec: SweepSpec, ck: Checkpoint, f_m: float, f_norm: float,
                 config: IntegratorConfig) -> dict:
    profile = VibrationProfile(spec.axis, spec.peak_acceleration, f_norm * f_m, 0.0, ck.t,
                               spec.misalignment)
    band = _band(f_norm)
    w0, w1 = steady_window(ck.t, f_m, abs(f_norm - band), skip_cycles=spec.skip_cycles,
                           skip_beats=spec.skip_beats, min_beats=spec.min_beats,
                           min_cycles=spec.min_cycles, max_cycles=spec.max_cycles)
    row = {"f_norm": float(f_norm), "status": "ok"}
    try:
        if spec.control == "pll":
            tr, _ = run_pll_loop(params, None, profile, spec.gains, (ck.t, w1), config,
                                 checkpoint=ck)
        else:
            drive = DriveSource.open_loop(1.0 / ck.period, params.hv_voltage, params.duty)
            tr = integrate(params, ck.state, drive, profile, (ck.t, w1), config, checkpoint=ck)
        stats = error_stats(measure_cycles(tr), (w0, w1), (params.theta_ref, params.f_ref))
    except DivergenceError:
        row["status"] = "diverged"
        return row
    except LockLostError:
        row["status"] = "lock_lost"
        return row
    except (IntegrationError, TooFewCrossingsError, WindowTooShortError) as exc:
        row["status"] = f"error: {exc}"
        return row
    row.update(stats.as_row())
    target = f_norm * f_m / band
    row["tracking"] = (stats.freq_mean * params.f_ref - target) / target
    return row


def run_frequency_sweep(spec: SweepSpec, params: MirrorParams,
                        config: Optional[IntegratorConfig] = None, *,
                        checkpoint: Optional[Checkpoint] = None,
                        progress: Optional[Callable[[int, int, dict], None]] = None) -> SweepResult:
    """Apply each grid tone to the same settled state and collect statistics.

    A failing point is recorded in its row's ``status`` and the sweep moves
    on. Rows are returned sorted by frequency.
    """
    config = replace(config or IntegratorConfig(), store_samples=False)
    ck = checkpoint or operating_point(params, config)
    f_m = 0.5 / ck.period
    grid = spec.frequencies
    rows = []
    for i, f in enumerate(grid):
        row = _sweep_point(params, spec, ck, f_m, float(f), config)
        rows.append(row)
        if progress is not None:
            progress(i, len(grid), row)
    rows.sort(key=lambda r: r["f_norm"])
    result = SweepResult(spec, f_m, rows)
    if spec.output:
        result.write(spec.output, f"sweep_{spec.axis}_{spec.control}")
    return result


@dataclass
class MisalignmentCheck:
    """Ty-band response of a misaligned Tz sweep against a pure Ty sweep."""

    misaligned: SweepResult
    reference: SweepResult
    ratio: float
    expected: float

    @property
    def relative_error(self) -> float:
        return abs(self.ratio / self.expected - 1.0)


def run_misalignment_check(spec: SweepSpec, params: MirrorParams,
                           config: Optional[IntegratorConfig] = None, *,
                           reference: Optional[SweepResult] = None,
                           checkpoint: Optional[Checkpoint] = None) -> MisalignmentCheck:
    """Compare the Ty-band STD peak of a misaligned Tz sweep with a pure Ty sweep.

    ``spec`` must be a Tz sweep with nonzero misalignment; its grid should
    cover the band around normalized 1. The expected ratio is
    ``|sin(misalignment)|``.
    """
    if spec.axis != "tz":
        raise ValueError("misalignment check needs a Tz sweep")
    if spec.misalignment == 0.0:
        raise ValueError("misalignment must be nonzero")
    mis = run_frequency_sweep(spec, params, config, checkpoint=checkpoint)
    if reference is None:
        reference = run_frequency_sweep(replace(spec, axis="ty", misalignment=0.0), params,
                                        config, checkpoint=checkpoint)
    pm, pr = mis.peak(1), reference.peak(1)
    if pm is None or pr is None:
        raise ProtocolError("grid does not cover the band around normalized 1")
    return MisalignmentCheck(mis, reference, pm[1] / pr[1], abs(math.sin(spec.misalignment)))


# ---------------------------------------------------------------------------
# transients
# ---------------------------------------------------------------------------

@dataclass
class TransientReport:
    """Response to a tone switched on at ``t_on``.

    ``beat_frequency`` is the dominant line of the per-half-cycle amplitude
    series after ``skip_cycles`` (in units of ``f_m``) and ``spectral_bin``
    the resolution of that spectrum. The ``*_pp`` values are peak-to-peak
    errors relative to the mean.
    """

    trace: Trace
    t_on: float
    f_m: float
    before: ErrorStats
    after: ErrorStats
    beat_frequency: float
    beat_frequency_freq: float
    spectral_bin: float
    amp_pp: float
    freq_pp: float
    cycles: object = field(repr=False, default=None)

    def write(self, outdir, prefix: str = "transient") -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        p1, p2 = self.trace.write_csv(outdir / prefix)
        p3 = outdir / f"{prefix}_cycles.csv"
        cy = self.cycles
        np.savetxt(p3, np.column_stack([cy.times, cy.half_periods, cy.amplitudes]),
                   delimiter=",", fmt="%.12e", comments="# ",
                   header="mirrorvib cycles v1\ntime[s],half_period[s],amplitude[rad]")
        p4 = outdir / f"{prefix}_summary.json"
        p4.write_text(json.dumps({
            "format": "mirrorvib transient-summary v1", "t_on": self.t_on, "f_m_hz": self.f_m,
            "beat_frequency": self.beat_frequency,
            "beat_frequency_from_freq": self.beat_frequency_freq,
            "spectral_bin": self.spectral_bin, "amp_pp": self.amp_pp, "freq_pp": self.freq_pp,
            "before": self.before.as_row(), "after": self.after.as_row(),
        }, indent=2))
        return [Path(p1), Path(p2), p3, p4]


def _dominant_line(series: np.ndarray) -> tuple[float, float]:
    x = series - series.mean()
    spec = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, d=0.5)  # half-cycle spacing, units of f_m
    k = 1 + int(np.argmax(spec[1:]))
    return float(freqs[k]), float(freqs[1])


def run_transient(params: MirrorParams, f_norm: float, axis: str = "ty", *,
                  control: str = "open_loop", g_rms: float = 2.0, misalignment: float = 0.0,
                  pre_cycles: int = 200, skip_cycles: int = 3000, measure_cycles_: int = 4000,
                  gains: PllGains = DEFAULT_GAINS, config: Optional[IntegratorConfig] = None,
                  checkpoint: Optional[Checkpoint] = None, store_samples: bool = True,
                  steady_tol: float = 1e-3) -> TransientReport:
    """Switch a tone on at a settled operating point and analyse the response.

    The mirror runs ``pre_cycles`` undisturbed, then the tone starts. Beat
    metrics use the ``measure_cycles_`` cycles after ``skip_cycles``, by
    which time the free slow oscillation excited at onset has decayed.
    """
    config = config or IntegratorConfig()
    ck = checkpoint or operating_point(params, replace(config, store_samples=False))
    f_m = 0.5 / ck.period
    t_on = ck.t + pre_cycles / f_m
    t_end = t_on + (skip_cycles + measure_cycles_) / f_m
    profile = VibrationProfile(axis, g_rms_to_peak(g_rms), f_norm * f_m, 0.0, t_on, misalignment)
    cfg = replace(config, store_samples=store_samples)
    if control == "pll":
        tr, _ = run_pll_loop(params, None, profile, gains, (ck.t, t_end), cfg, checkpoint=ck)
    else:
        drive = DriveSource.open_loop(1.0 / ck.period, params.hv_voltage, params.duty)
        tr = integrate(params, ck.state, drive, profile, (ck.t, t_end), cfg, checkpoint=ck)
    cy = measure_cycles(tr)
    norm = (params.theta_ref, params.f_ref)
    before = error_stats(cy, (ck.t, t_on), norm, min_cycles=min(50, pre_cycles))
    if before.std_amplitude_pct > 100 * steady_tol:
        raise ProtocolError(f"mirror not settled before onset "
                            f"(amplitude STD {before.std_amplitude_pct:.3g} %)")
    w0 = t_on + skip_cycles / f_m
    after = error_stats(cy, (w0, t_end), norm)
    meas = cy.window(w0, t_end)
    beat, bin_ = _dominant_line(meas.amplitudes)
    beat_f, _ = _dominant_line(meas.frequencies)
    a, fr = meas.amplitudes, meas.frequencies
    return TransientReport(
        trace=tr, t_on=t_on, f_m=f_m, before=before, after=after,
        beat_frequency=beat, beat_frequency_freq=beat_f, spectral_bin=bin_,
        amp_pp=float((a.max() - a.min()) / a.mean()),
        freq_pp=float((fr.max() - fr.min()) / fr.mean()), cycles=cy)


# ---------------------------------------------------------------------------
# energy model check
# ---------------------------------------------------------------------------

@dataclass
class EnergyCheck:
    """Numeric per-period energy against the closed form.

    ``amp_ratio`` is the fitted beat amplitude of the numeric series over
    that of the closed form; ``lag_periods`` the phase difference expressed
    in mirror periods (one sample of the per-period series).
    """

    times: np.ndarray
    numeric: np.ndarray
    analytic: np.ndarray
    beat: float
    amp_ratio: float
    lag_periods: float
    theta: float
    f_m: float


def run_energy_check(params: MirrorParams, axis: str = "ty", f_norm: float = 1.03, *,
                     theta: float = 0.2, g_rms: float = 2.0, periods: int = 400,
                     phase: float = 0.0, trace: Optional[Trace] = None,
                     f_m: Optional[float] = None) -> EnergyCheck:
    """Per-period energy from quadrature versus the closed-form model.

    By default the mirror follows the imposed motion
    ``theta*sin(2*pi*f_m*t)``; pass a simulated ``trace`` (and its ``f_m``)
    to evaluate a real run instead, with ``theta`` its mean amplitude.
    """
    f_m = f_m if f_m is not None else params.f_ref
    band = 1 if axis == "ty" else 2
    profile = VibrationProfile(axis, g_rms_to_peak(g_rms), f_norm * f_m, phase, 0.0)
    beat = abs(band - f_norm) * f_m
    if beat == 0.0:
        raise ValueError("the tone sits exactly on the coupling band; no beat to compare")
    if trace is None:
        span_periods = max(periods, int(math.ceil(3.0 * f_m / beat)))
        trace = imposed_trace(theta, f_m, (0.0, span_periods / f_m))
    t, num = numeric_energy_series(trace, params, profile)
    coeffs = coupling_coeffs(params.mass, params.com_offset, theta)
    ana = analytic_energy_series(coeffs, f_m, profile, t)
    a1, p1 = fit_tone(t, num, beat)
    a2, p2 = fit_tone(t, ana, beat)
    dphi = (p1 - p2 + np.pi) % (2 * np.pi) - np.pi
    lag = dphi / (2 * np.pi * beat) * f_m
    return EnergyCheck(t, num, ana, beat / f_m, a1 / a2, float(lag), theta, f_m)
