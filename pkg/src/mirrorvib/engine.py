"""Time integration, zero-crossing events and per-cycle measurements."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernel as K
from .control import DriveSource, LockLostError
from .model import MirrorParams, SimState, VibrationProfile

log = logging.getLogger(__name__)

__all__ = [
    "IntegratorConfig", "Trace", "CyclePeriods", "Checkpoint",
    "IntegrationError", "StiffnessError", "DivergenceError", "TooFewCrossingsError",
    "integrate", "detect_crossings", "measure_cycles", "settle", "SettleError",
]


class IntegrationError(RuntimeError):
    def __init__(self, msg, last_time=None, trace=None):
        super().__init__(msg)
        self.last_time = last_time
        self.trace = trace


class StiffnessError(IntegrationError):
    """Adaptive step size fell below the representable minimum."""


class DivergenceError(IntegrationError):
    """State became non-finite or left the curve domains."""


class TooFewCrossingsError(ValueError):
    pass


class SettleError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings.

    ``rel_tol`` is tight enough that an undamped free run keeps its energy
    to 1e-9 over 100 periods. ``abs_tol`` defaults to ``1e-12 * theta_ref``
    and ``sample_rate`` to 32 samples per nominal actuation period. With ``store_samples=False`` only
    events (crossings, extrema, PLL history) are kept, which is what long
    sweeps need.
    """

    method: str = "rk45"
    dt: Optional[float] = None
    rel_tol: float = 1e-12
    abs_tol: Optional[float] = None
    sample_rate: Optional[float] = None
    max_step: Optional[float] = None
    store_samples: bool = True

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError("method must be 'rk4' or 'rk45'")
        if self.rel_tol <= 0 or (self.abs_tol is not None and self.abs_tol <= 0):
            raise ValueError("tolerances must be > 0")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be > 0")

    def resolved(self, params: MirrorParams, drive: DriveSource) -> dict:
        f_act = 1.0 / drive.period
        if drive.sweep is not None:
            f_act = max(f_act, drive.sweep[2], drive.sweep[3])
        rate = self.sample_rate if self.sample_rate is not None else 32.0 * f_act
        if rate < 20.0 * f_act:
            raise ValueError(f"sample_rate {rate:g} Hz is below 20x the actuation "
                             f"frequency {f_act:g} Hz")
        dt = self.dt if self.dt is not None else drive.period / 64.0
        return {
            "method": K.METHOD_RK4 if self.method == "rk4" else K.METHOD_RK45,
            "dt": dt,
            "rtol": self.rel_tol,
            "atol": self.abs_tol if self.abs_tol is not None else 1e-12 * params.theta_ref,
            "max_step": self.max_step if self.max_step is not None else drive.period / 8.0,
            "rate": rate,
        }


@dataclass(frozen=True)
class Checkpoint:
    """Everything needed to continue a run bit-for-bit.

    ``period`` is the actuation period in force and ``t_beta_ref`` the mean
    phase in time measured while the mirror ran open loop at that period.
    """

    state: SimState
    drive_state: np.ndarray = field(repr=False)
    period: float
    t_beta_ref: Optional[float] = None
    amplitude: Optional[float] = None

    @property
    def t(self) -> float:
        return self.state.t


@dataclass
class Trace:
    """Result of one integration run.

    Attributes
    ----------
    times, theta, omega, voltage : ndarray
        Uniformly sampled output (empty when samples were not stored).
    crossings : ndarray, shape (n, 2)
        ``(time, direction)`` of theta = 0 events; direction +1 rising, -1 falling.
    extrema : ndarray, shape (n, 2)
        ``(time, theta)`` at omega = 0 events.
    history : ndarray, shape (n, 6)
        Per-crossing PLL bookkeeping (see :func:`mirrorvib.control.run_pll_loop`).
    edges : ndarray, shape (n, 2)
        Rising edges ``(time, period length)`` generated during the run.
    final : Checkpoint
    """

    times: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    voltage: np.ndarray
    crossings: np.ndarray
    extrema: np.ndarray
    history: np.ndarray
    edges: np.ndarray
    final: Checkpoint
    span: tuple = (0.0, 0.0)

    @property
    def sample_rate(self) -> float:
        if len(self.times) < 2:
            return float("nan")
        return 1.0 / (self.times[1] - self.times[0])

    def write_csv(self, prefix) -> tuple[str, str]:
        """Write ``<prefix>_trace.csv`` and ``<prefix>_crossings.csv``."""
        p1, p2 = f"{prefix}_trace.csv", f"{prefix}_crossings.csv"
        np.savetxt(p1, np.column_stack([self.times, self.theta, self.omega, self.voltage]),
                   delimiter=",", fmt="%.12e", comments="# ",
                   header="mirrorvib trace v1\ntime[s],theta[rad],omega[rad/s],voltage[V]")
        np.savetxt(p2, self.crossings, delimiter=",", fmt=["%.15e", "%d"], comments="# ",
                   header="mirrorvib crossings v1\ntime[s],direction[+1 rising/-1 falling]")
        return p1, p2


def _curve_args(params: MirrorParams):
    out = []
    for c in (params.stiffness, params.damping_base, params.damping_amp, params.cap_deriv):
        out += [np.ascontiguousarray(c.breaks), np.ascontiguousarray(c.coeffs), c.parity_code]
    out.append(not params.damping_amp.is_zero)
    return tuple(out)


_EMPTY = np.empty(0)


def _vib_args(profile: VibrationProfile):
    wy, wz = profile.axis_weights
    if profile.samples is not None:
        ts, ay, az = (np.ascontiguousarray(a, dtype=float) for a in profile.samples)
        return (0.0, 1.0, 0.0, float(profile.t_on), 1.0, 0.0, ts, ay, az)
    return (float(profile.amplitude), float(profile.frequency), float(profile.phase),
            float(profile.t_on), wy, wz, _EMPTY, _EMPTY, _EMPTY)


def initial_drive_state(drive: DriveSource, t0: float) -> np.ndarray:
    ds = np.zeros(K.DS_SIZE)
    ds[K.DS_PERIOD_START] = drive.first_edge
    ds[K.DS_PERIOD_LEN] = 1.0 / drive.frequency_at(drive.first_edge)
    ds[K.DS_T_CMD] = drive.period
    ds[K.DS_LAST_CROSS] = np.nan
    if drive.first_edge > t0:
        raise ValueError("first drive edge must not lie after the start time")
    return ds


def integrate(params: MirrorParams, initial: SimState, drive: DriveSource,
              profile: VibrationProfile, span: tuple, config: Optional[IntegratorConfig] = None,
              *, checkpoint: Optional[Checkpoint] = None) -> Trace:
    """Integrate the equation of motion over ``span``.

    The drive schedule is generated while integrating: steps stop exactly at
    every drive edge, and in PLL mode each zero crossing updates the period
    of the next actuation cycle. Passing ``checkpoint`` resumes the drive
    phase (and PLL timing) of an earlier run; ``initial`` is then ignored.
    """
    config = config or IntegratorConfig()
    t0, t1 = map(float, span)
    if not t1 > t0:
        raise ValueError("span must be increasing")
    if checkpoint is not None:
        initial = checkpoint.state
        ds = checkpoint.drive_state.copy()
        if drive.mode == "pll":
            # bumpless switch-over: the PLL starts from the period in force
            ds[K.DS_T_CMD] = (drive.start_period if drive.start_period is not None
                              else ds[K.DS_PERIOD_LEN])
            ds[K.DS_ACCUM] = 0.0
    else:
        ds = initial_drive_state(drive, t0)
    if abs(initial.t - t0) > 1e-12 * max(1.0, abs(t0)):
        raise ValueError("initial state time must equal span start")
    if abs(initial.theta) > params.theta_limit:
        raise DivergenceError("initial angle outside curve domain", last_time=t0)

    res = config.resolved(params, drive)
    if drive.mode == "pll":
        if drive.ref is None:
            raise ValueError("PLL drive needs a phase reference")
        lo, hi = drive.clamp
        pp = np.array([drive.gains.kp, drive.gains.ki, drive.ref,
                       lo * drive.period, hi * drive.period])
    else:
        pp = np.array([0.0, 0.0, drive.ref if drive.ref is not None else 0.0, 0.0, np.inf])
    if drive.sweep is not None:
        ramp = tuple(float(v) for v in drive.sweep)
    else:
        ramp = (0.0, 0.0, 1.0 / drive.period, 1.0 / drive.period)
    rate = res["rate"] if config.store_samples else 1.0 / (t1 - t0)

    out = K.integrate_kernel(
        _curve_args(params), float(params.inertia), float(params.coupling),
        float(params.theta_limit), _vib_args(profile),
        float(drive.hv_voltage), float(drive.duty), drive.mode == "pll", ramp, pp, ds,
        res["method"], float(res["dt"]), float(res["rtol"]), float(res["atol"]),
        float(res["max_step"]), t0, t1, float(initial.theta), float(initial.omega),
        float(rate), 0.01 * params.theta_ref)
    status, t_end, th, om, n_out, s_th, s_om, s_v, cross, ext, hist, edges = out

    if config.store_samples:
        times = t0 + np.arange(n_out) / rate
        samples = (times, s_th[:n_out], s_om[:n_out], s_v[:n_out])
    else:
        samples = (_EMPTY, _EMPTY, _EMPTY, _EMPTY)
    final_state = SimState(t_end, th, om) if np.isfinite([th, om]).all() else initial
    final = Checkpoint(final_state, ds, float(ds[K.DS_PERIOD_LEN]),
                       t_beta_ref=drive.ref)
    trace = Trace(*samples, cross, ext, hist, edges, final, span=(t0, t_end))

    if status == K.STATUS_STEP_UNDERFLOW:
        raise StiffnessError(f"step size underflow at t = {t_end:.9g} s", t_end, trace)
    if status in (K.STATUS_DIVERGED, K.STATUS_DOMAIN):
        what = "non-finite state" if status == K.STATUS_DIVERGED else "angle outside curve domain"
        raise DivergenceError(f"{what}; last valid time {t_end:.9g} s", t_end, trace)
    if status == K.STATUS_LOCK_LOST:
        raise LockLostError(f"oscillation lost at t = {t_end:.9g} s", trace, hist)
    return trace


# ---------------------------------------------------------------------------
# events and cycles
# ---------------------------------------------------------------------------

def detect_crossings(theta_samples, sample_times, omega_samples=None) -> np.ndarray:
    """Zero crossings of a sampled angle.

    Each sign change between neighbouring samples gives one event located on
    the cubic Hermite interpolant through the samples and their slopes
    (``omega_samples``, or finite-difference slopes when not given).

    Returns
    -------
    ndarray, shape (n, 2)
        ``(time, direction)``; direction +1 for rising, -1 for falling.
    """
    th = np.asarray(theta_samples, dtype=float)
    t = np.asarray(sample_times, dtype=float)
    if th.shape != t.shape or th.size < 2:
        raise ValueError("need at least 2 samples with matching times")
    om = np.gradient(th, t, edge_order=2) if omega_samples is None else \
        np.asarray(omega_samples, dtype=float)
    pos = th > 0.0
    idx = np.flatnonzero(pos[1:] != pos[:-1])
    out = np.empty((idx.size, 2))
    for n, i in enumerate(idx):
        h = t[i + 1] - t[i]
        s = K.hermite_root(th[i], om[i], th[i + 1], om[i + 1], h)
        out[n, 0] = t[i] + s * h
        out[n, 1] = 1.0 if pos[i + 1] else -1.0
    return out


@dataclass(frozen=True)
class CyclePeriods:
    """Per-half-cycle measurements.

    ``times[i]`` is the crossing that closes half cycle ``i``;
    ``half_periods[i]`` its length and ``amplitudes[i]`` the peak ``|theta|``
    inside it.
    """

    times: np.ndarray
    half_periods: np.ndarray
    amplitudes: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        """Per-cycle mirror frequency ``1 / (2*T_m)``."""
        return 0.5 / self.half_periods

    def window(self, t_start: float, t_end: float) -> "CyclePeriods":
        sel = (self.times >= t_start) & (self.times <= t_end)
        return CyclePeriods(self.times[sel], self.half_periods[sel], self.amplitudes[sel])

    def __len__(self):
        return len(self.times)


def _sample_peaks(trace: Trace, crossings: np.ndarray) -> np.ndarray:
    # peak |theta| per half cycle from samples, refined on the Hermite
    # interpolant of (theta, omega) around the largest sample
    t, th, om = trace.times, trace.theta, trace.omega
    peaks = np.empty(len(crossings) - 1)
    idx = np.searchsorted(t, crossings[:, 0])
    for i in range(len(peaks)):
        a, b = idx[i], idx[i + 1]
        if b <= a:
            peaks[i] = 0.0
            continue
        j = a + int(np.argmax(np.abs(th[a:b])))
        best = abs(th[j])
        for k in (j - 1, j):
            if 0 <= k < len(t) - 1 and (om[k] > 0) != (om[k + 1] > 0):
                h = t[k + 1] - t[k]
                # slope of omega from neighbouring samples
                m0 = (om[k + 1] - om[k - 1]) / (t[k + 1] - t[k - 1]) if k > 0 else (om[k + 1] - om[k]) / h
                m1 = (om[k + 2] - om[k]) / (t[k + 2] - t[k]) if k + 2 < len(t) else (om[k + 1] - om[k]) / h
                s = K.hermite_root(om[k], m0, om[k + 1], m1, h)
                best = max(best, abs(K.hermite(th[k], om[k], th[k + 1], om[k + 1], h, s)))
        peaks[i] = best
    return peaks


def measure_cycles(trace) -> CyclePeriods:
    """Half periods and half-cycle peak amplitudes from a trace.

    Uses the integrator's extremum events when present, otherwise the
    sampled output.
    """
    cr = trace.crossings
    if len(cr) < 3:
        raise TooFewCrossingsError(f"need >= 3 crossings, got {len(cr)}")
    tc = cr[:, 0]
    if len(trace.extrema):
        et, ev = trace.extrema[:, 0], np.abs(trace.extrema[:, 1])
        # extremum i lies between crossings; take the largest per interval
        bins = np.searchsorted(tc, et)
        amps = np.zeros(len(tc) - 1)
        inside = (bins >= 1) & (bins <= len(tc) - 1)
        np.maximum.at(amps, bins[inside] - 1, ev[inside])
    else:
        amps = _sample_peaks(trace, cr)
    return CyclePeriods(tc[1:].copy(), np.diff(tc), amps)


# ---------------------------------------------------------------------------
# startup onto the operating point
# ---------------------------------------------------------------------------

def _cycle_amplitude(trace: Trace, n: int) -> float:
    ext = trace.extrema
    if len(ext) < max(2, n // 2):
        return 0.0
    return float(np.mean(np.abs(ext[-n:, 1])))


def _reseed(ck: Checkpoint, seed: float, omega: float) -> Checkpoint:
    # a decayed oscillation stands in for ambient noise at the seed level
    st = ck.state
    amp = np.hypot(st.theta, st.omega / omega)
    if amp >= seed:
        return ck
    if amp == 0.0:
        return replace(ck, state=SimState(st.t, seed, 0.0))
    return replace(ck, state=SimState(st.t, st.theta * seed / amp, st.omega * seed / amp))


def settle(params: MirrorParams, f_norm: float = 1.0, *, sweep_from: float = 1.10,
           sweep_cycles: int = 2000, settle_tol: float = 1e-5, block_cycles: int = 100,
           max_blocks: int = 400, config: Optional[IntegratorConfig] = None,
           drive: Optional[DriveSource] = None) -> Checkpoint:
    """Bring the mirror onto the high-amplitude branch at ``f_norm``.

    Starts nearly at rest (``theta = 1e-3*theta_ref``), ramps the normalized
    mirror frequency from ``sweep_from`` to ``f_norm`` over ``sweep_cycles``
    mirror periods, then holds until the mean amplitude changes by less than
    ``settle_tol`` (relative) between blocks of ``block_cycles`` cycles. The
    returned checkpoint also carries the open-loop phase reference for a
    bumpless PLL start.
    """
    config = config or IntegratorConfig(store_samples=False)
    config = replace(config, store_samples=False)
    f_mirror_end = f_norm * params.f_ref
    f_mirror_start = sweep_from * params.f_ref
    t_sweep = sweep_cycles / (0.5 * (f_mirror_start + f_mirror_end))
    base = drive or DriveSource.open_loop(2.0 * f_mirror_end, params.hv_voltage, params.duty)
    ramp = base.with_(sweep=(0.0, t_sweep, 2.0 * f_mirror_start, 2.0 * f_mirror_end),
                      period=1.0 / (2.0 * f_mirror_end))
    seed = 1e-3 * params.theta_ref
    trace = integrate(params, SimState(0.0, seed, 0.0), ramp,
                      VibrationProfile.none(), (0.0, t_sweep), config)
    ck = _reseed(trace.final, seed, 2.0 * np.pi * f_mirror_end)
    hold = base.with_(first_edge=0.0, period=1.0 / (2.0 * f_mirror_end), sweep=None)
    t_block = block_cycles / f_mirror_end
    prev = _cycle_amplitude(trace, 2 * block_cycles)
    for _ in range(max_blocks):
        tr = integrate(params, ck.state, hold, VibrationProfile.none(),
                       (ck.t, ck.t + t_block), config, checkpoint=ck)
        ck = tr.final
        amp = _cycle_amplitude(tr, 2 * block_cycles)
        if amp < 0.01 * params.theta_ref and amp <= prev:
            raise SettleError("mirror did not reach the high-amplitude branch "
                              f"(amplitude {amp:.3g} rad at f_norm = {f_norm})")
        if amp >= 0.01 * params.theta_ref and abs(amp - prev) < settle_tol * amp:
            t_beta = tr.history[:, 2]
            return replace(ck, period=hold.period, t_beta_ref=float(np.mean(t_beta)),
                           amplitude=amp)
        prev = amp
    raise SettleError(f"amplitude did not settle within {max_blocks} blocks")
