"""Energy-coupling model of vibration on the mirror and per-cycle error statistics.

With the mirror on a steady trajectory ``theta = Theta*sin(2*pi*f_m*t)`` the
energy a translational tone injects during one mirror period is, to leading
order in the detuning,

    dE(t) = a_y*v_y1*cos(2*pi*(f_m - f_y)*t - phi_y)          (Ty)
    dE(t) = a_z*v_z2*sin(2*pi*(2*f_m - f_z)*t - phi_z)        (Tz)

for a tone ``a*cos(2*pi*f*t + phi)``. :func:`numeric_energy_series` computes
the same quantity by quadrature of ``tau_v * omega`` over a one-period window.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.ndimage import median_filter

from .engine import CyclePeriods, Trace, detect_crossings
from .model import MirrorParams, VibrationProfile, vibration_torque

__all__ = [
    "EnergyCoeffs", "ErrorStats", "CouplingValidityError", "WindowTooShortError",
    "coupling_coeffs", "analytic_energy_series", "numeric_energy_series",
    "imposed_trace", "error_stats", "steady_window", "fit_tone",
    "write_energy_csv", "write_stats_csv", "THETA_MAX_VALID",
]

THETA_MAX_VALID = 0.35


class CouplingValidityError(ValueError):
    """Amplitude outside the range where the small-angle expansion holds."""


class WindowTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyCoeffs:
    """Vibration coupling coefficients [N m] for amplitude ``theta``.

    ``v_y1``/``v_y3`` weight the f_m and 3 f_m components of the Ty coupling,
    ``v_z2``/``v_z4`` the 2 f_m and 4 f_m components of the Tz coupling.
    """

    v0: float
    v_y1: float
    v_y3: float
    v_z2: float
    v_z4: float
    theta: float


def coupling_coeffs(mass: float, com_offset: float, theta: float) -> EnergyCoeffs:
    """Coupling coefficients for a mirror with ``m*L`` swinging at ``theta`` rad."""
    if not (mass > 0 and com_offset > 0):
        raise ValueError("mass and offset must be > 0")
    if not (0.0 < theta <= THETA_MAX_VALID):
        raise CouplingValidityError(
            f"amplitude {theta!r} rad outside (0, {THETA_MAX_VALID}]; "
            "the small-angle expansion does not apply")
    t2 = theta * theta
    v0 = 2.0 * math.pi * mass * com_offset * theta
    return EnergyCoeffs(
        v0=v0,
        v_y1=v0 * (8.0 - t2) / 16.0,
        v_y3=v0 * t2 / 16.0,
        v_z2=v0 * (12.0 * theta - t2 * theta) / 48.0,
        v_z4=v0 * t2 * theta / 96.0,
        theta=theta,
    )


def _detuning(profile: VibrationProfile, f_m: float) -> float:
    if profile.axis == "ty":
        return f_m - profile.frequency
    return 2.0 * f_m - profile.frequency


def analytic_energy_series(coeffs: EnergyCoeffs, f_m: float, profile: VibrationProfile,
                           times) -> np.ndarray:
    """Closed-form per-period energy change at ``times`` for the profile's axis.

    The detuning (``f_m - f_y`` for Ty, ``2 f_m - f_z`` for Tz) must not
    exceed ``0.2 f_m``; above ``0.05 f_m`` a warning is issued since the
    slowly-varying approximation degrades.
    """
    if profile.samples is not None:
        raise ValueError("closed form needs a single-tone profile")
    if not f_m > 0:
        raise ValueError("f_m must be > 0")
    t = np.asarray(times, dtype=float)
    det = _detuning(profile, f_m)
    if abs(det) > 0.2 * f_m:
        raise ValueError(f"detuning {det / f_m:.3g} f_m exceeds 0.2 f_m")
    if abs(det) > 0.05 * f_m:
        warnings.warn(f"detuning {det / f_m:.3g} f_m: closed form is approximate",
                      RuntimeWarning, stacklevel=2)
    wy, wz = profile.axis_weights
    arg = 2.0 * np.pi * det * t - profile.phase
    a = profile.amplitude
    if profile.axis == "ty":
        # the tone is purely along y apart from misalignment; the Tz term
        # only contributes when 2 f_m is near f_y, which the bound excludes
        return a * wy * coeffs.v_y1 * np.cos(arg)
    return a * wz * coeffs.v_z2 * np.sin(arg)


def imposed_trace(theta_amp: float, f_m: float, span: tuple, rate: Optional[float] = None,
                  phase: float = 0.0) -> Trace:
    """A :class:`Trace` of the prescribed motion ``theta_amp*sin(2*pi*f_m*t + phase)``.

    Used to evaluate the energy model on an exact single-tone trajectory.
    """
    rate = rate if rate is not None else 64.0 * f_m
    t0, t1 = span
    n = int(math.floor((t1 - t0) * rate)) + 1
    t = t0 + np.arange(n) / rate
    w = 2.0 * np.pi * f_m
    th = theta_amp * np.sin(w * t + phase)
    om = theta_amp * w * np.cos(w * t + phase)
    return Trace(times=t, theta=th, omega=om, voltage=np.zeros(n),
                 crossings=detect_crossings(th, t, om), extrema=np.empty((0, 2)),
                 history=np.empty((0, 6)), edges=np.empty((0, 2)), final=None,
                 span=(float(t0), float(t1)))


def _local_frequency(trace: Trace, at: np.ndarray, neighbours: int = 11) -> np.ndarray:
    cr = trace.crossings
    if len(cr) < 3:
        cr = detect_crossings(trace.theta, trace.times, trace.omega)
    if len(cr) < 3:
        raise ValueError("trace has too few zero crossings to estimate f_m")
    tc = cr[:, 0]
    f = 0.5 / np.diff(tc)
    size = min(neighbours, len(f) if len(f) % 2 else len(f) - 1)
    f_med = median_filter(f, size=max(size, 1), mode="nearest")
    mid = 0.5 * (tc[1:] + tc[:-1])
    return np.interp(at, mid, f_med)


def numeric_energy_series(trace: Trace, params: MirrorParams, profile: VibrationProfile,
                          *, per_period: bool = True):
    """Per-period energy change by quadrature of ``tau_v*omega``.

    The integrand is accumulated with composite Simpson on the trace grid and
    ``dE(t) = F(t + 1/f_m) - F(t)`` is read off a spline of the running
    integral ``F``; ``f_m`` is the median cycle frequency around ``t``.

    Parameters
    ----------
    per_period : bool
        Evaluate once per mirror period, at the rising zero crossings (the
        natural sampling of a per-period quantity). Otherwise evaluate at
        every output sample whose window fits in the trace.

    Returns
    -------
    t, dE : ndarray
    """
    t = np.asarray(trace.times)
    if t.size < 3:
        raise ValueError("trace holds no samples")
    if per_period:
        cr = trace.crossings
        if len(cr) < 3:
            cr = detect_crossings(trace.theta, t, trace.omega)
        starts = cr[cr[:, 1] > 0, 0]
    else:
        starts = t
    f_loc = _local_frequency(trace, starts)
    ends = starts + 1.0 / f_loc
    keep = (starts >= t[0]) & (ends <= t[-1])
    if not np.any(keep):
        raise ValueError("trace spans less than one mirror period")
    starts, ends = starts[keep], ends[keep]
    if profile.samples is None and profile.amplitude == 0.0:
        return starts, np.zeros(starts.size)
    tau = vibration_torque(params, trace.theta, np.maximum(t, 0.0), profile)
    running = cumulative_simpson(tau * trace.omega, x=t, initial=0.0)
    spl = CubicSpline(t, running)
    return starts, spl(ends) - spl(starts)


def fit_tone(t, y, freq: float) -> tuple[float, float]:
    """Least-squares ``(amplitude, phase)`` of ``A*cos(2*pi*freq*t - phase)`` in ``y``."""
    t = np.asarray(t, dtype=float)
    w = 2.0 * np.pi * freq
    basis = np.column_stack([np.cos(w * t), np.sin(w * t), np.ones_like(t)])
    (c, s, _), *_ = np.linalg.lstsq(basis, np.asarray(y, dtype=float), rcond=None)
    return float(np.hypot(c, s)), float(np.arctan2(s, c))


@dataclass(frozen=True)
class ErrorStats:
    """Amplitude and frequency statistics over a measurement window.

    Amplitudes are normalized by ``theta_ref`` and frequencies by ``f_ref``.
    The STD percentages use the series normalized by its own mean.
    """

    amp_mean: float
    amp_max: float
    amp_min: float
    freq_mean: float
    freq_max: float
    freq_min: float
    std_amplitude_pct: float
    std_frequency_pct: float
    window: tuple
    n_cycles: int

    def as_row(self) -> dict:
        row = asdict(self)
        row["window_start"], row["window_end"] = row.pop("window")
        return row


def error_stats(cycles: CyclePeriods, window: Optional[tuple] = None,
                normalization: tuple = (1.0, 1.0), min_cycles: int = 50) -> ErrorStats:
    """STD amplitude and frequency errors of the cycles inside ``window``.

    ``normalization = (theta_ref, f_ref)`` only scales the reported
    mean/max/min; percentages are scale-free.
    """
    if window is not None:
        cycles = cycles.window(*window)
    n = len(cycles)
    if n < min_cycles:
        raise WindowTooShortError(f"{n} cycles in window, need >= {min_cycles}")
    th_ref, f_ref = normalization
    a = cycles.amplitudes
    f = cycles.frequencies
    a_mean, f_mean = float(a.mean()), float(f.mean())
    if not a_mean > 0:
        raise ValueError("zero mean amplitude in window")
    span = window if window is not None else (float(cycles.times[0]), float(cycles.times[-1]))
    return ErrorStats(
        amp_mean=a_mean / th_ref, amp_max=float(a.max()) / th_ref, amp_min=float(a.min()) / th_ref,
        freq_mean=f_mean / f_ref, freq_max=float(f.max()) / f_ref, freq_min=float(f.min()) / f_ref,
        std_amplitude_pct=float(100.0 * a.std() / a_mean),
        std_frequency_pct=float(100.0 * f.std() / f_mean),
        window=tuple(float(v) for v in span), n_cycles=n,
    )


def steady_window(t_on: float, f_m: float, detuning: float, *, skip_cycles: int = 200,
                  skip_beats: int = 5, min_beats: int = 20, min_cycles: int = 1000,
                  max_cycles: Optional[int] = None) -> tuple[float, float]:
    """Measurement window after a tone switches on at ``t_on``.

    Skips ``max(skip_cycles, skip_beats)`` mirror cycles, then measures at
    least ``min_beats`` beat periods (and ``min_cycles`` cycles). ``detuning``
    is the beat frequency in units of ``f_m``; ``max_cycles`` caps the
    measured length for nearly resonant tones.
    """
    if not f_m > 0:
        raise ValueError("f_m must be > 0")
    beat = 1.0 / abs(detuning) if detuning != 0 else math.inf
    skip = max(skip_cycles, skip_beats * beat)
    meas = max(min_cycles, min_beats * beat)
    if max_cycles is not None:
        skip = min(skip, max_cycles)
        meas = min(meas, max_cycles)
    return t_on + skip / f_m, t_on + (skip + meas) / f_m


def write_energy_csv(path, t, numeric, analytic=None) -> None:
    """Energy series CSV: ``time[s], dE_numeric[J]`` and optionally ``dE_analytic[J]``."""
    cols = [np.asarray(t), np.asarray(numeric)]
    head = "time[s],dE_numeric[J]"
    if analytic is not None:
        cols.append(np.asarray(analytic))
        head += ",dE_analytic[J]"
    np.savetxt(path, np.column_stack(cols), delimiter=",", fmt="%.12e", comments="# ",
               header="mirrorvib energy-series v1\n" + head)


STATS_FIELDS = ("f_norm", "status", "amp_mean", "amp_max", "amp_min", "freq_mean", "freq_max",
                "freq_min", "std_amplitude_pct", "std_frequency_pct", "window_start",
                "window_end", "n_cycles")


def write_stats_csv(path, rows: Sequence[dict]) -> None:
    """One row per run or grid point; missing statistics are written empty."""
    with open(path, "w", newline="") as fh:
        fh.write("# mirrorvib stats v1\n")
        w = csv.DictWriter(fh, fieldnames=STATS_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in STATS_FIELDS})
