"""Rectangular comb-drive generation and the period-domain PI phase-locked loop.

Timing conventions
------------------
Each actuation period starts with a rising edge and keeps the high voltage for
``duty`` of its length. At every zero crossing of the mirror angle the loop
measures

* ``T_m``    - time since the previous crossing (half mirror period),
* ``t_beta`` - time from the crossing to the next scheduled rising edge,

and sets the length of the period that starts at that next edge::

    e        = t_beta_ref - t_beta
    T_pll'   = T_pll + k_P*(T_m - T_pll) + k_I*e

With this choice of ``t_beta`` the phase propagates as
``t_beta' = t_beta - T_m' + T_pll'`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._kernel import pll_step

__all__ = [
    "DriveSource", "PllGains", "PllState", "ScheduleExhaustedError", "LockLostError",
    "drive_voltage", "phase_error", "pll_update", "run_pll_loop", "DEFAULT_GAINS",
    "write_pll_history_csv",
]


class ScheduleExhaustedError(LookupError):
    """Drive voltage requested outside the generated edge schedule."""


class LockLostError(RuntimeError):
    """Mirror oscillation collapsed while the PLL was active."""

    def __init__(self, msg, trace=None, history=None):
        super().__init__(msg)
        self.trace = trace
        self.history = history


@dataclass(frozen=True)
class PllGains:
    kp: float = 0.3
    ki: float = 0.05

    def __post_init__(self):
        if not (math.isfinite(self.kp) and math.isfinite(self.ki)):
            raise ValueError("gains must be finite")


DEFAULT_GAINS = PllGains()


@dataclass(frozen=True)
class DriveSource:
    """Rectangular high-voltage drive, open loop or PLL controlled.

    ``period`` is the actuation period (half the mirror period on the
    parametric resonance). ``sweep = (t_start, t_end, f_start, f_end)``
    ramps the open-loop actuation frequency linearly; each period takes the
    frequency valid at its rising edge. ``schedule`` holds the rising edges
    ``(time, length)`` recorded by a finished run. ``start_period`` sets
    the first PLL command when resuming from a checkpoint (default: the
    period in force, a bumpless start).
    """

    mode: str = "open_loop"
    hv_voltage: float = 100.0
    duty: float = 0.6
    period: float = 2.5e-4
    gains: PllGains = DEFAULT_GAINS
    ref: Optional[float] = None
    sweep: Optional[tuple] = None
    first_edge: float = 0.0
    clamp: tuple = (0.5, 2.0)
    start_period: Optional[float] = None
    schedule: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("open_loop", "pll"):
            raise ValueError("mode must be 'open_loop' or 'pll'")
        if not 0.0 < self.duty < 1.0:
            raise ValueError("duty must lie in (0, 1)")
        if not (math.isfinite(self.hv_voltage) and self.hv_voltage >= 0):
            raise ValueError("hv_voltage must be >= 0")
        if not (math.isfinite(self.period) and self.period > 0):
            raise ValueError("period must be > 0")
        if self.sweep is not None:
            t0, t1, f0, f1 = self.sweep
            if not (f0 > 0 and f1 > 0 and t1 >= t0):
                raise ValueError("invalid frequency sweep")

    @classmethod
    def open_loop(cls, f_act: float, hv_voltage=100.0, duty=0.6, **kw) -> "DriveSource":
        return cls(mode="open_loop", hv_voltage=hv_voltage, duty=duty, period=1.0 / f_act, **kw)

    @classmethod
    def pll(cls, period: float, ref: float, gains: PllGains = DEFAULT_GAINS,
            hv_voltage=100.0, duty=0.6, **kw) -> "DriveSource":
        return cls(mode="pll", hv_voltage=hv_voltage, duty=duty, period=period,
                   gains=gains, ref=ref, **kw)

    def with_(self, **changes) -> "DriveSource":
        return replace(self, **changes)

    def frequency_at(self, t: float) -> float:
        """Open-loop actuation frequency for a period starting at ``t``."""
        if self.sweep is None:
            return 1.0 / self.period
        t0, t1, f0, f1 = self.sweep
        if t <= t0 or t1 <= t0:
            return f0
        if t >= t1:
            return f1
        return f0 + (f1 - f0) * (t - t0) / (t1 - t0)

    def edges(self, t_end: float) -> np.ndarray:
        """Open-loop rising edges ``(time, length)`` from ``first_edge`` up to ``t_end``."""
        if self.mode != "open_loop":
            raise ScheduleExhaustedError("PLL edges exist only after a simulation run")
        out = []
        t = self.first_edge
        while t <= t_end:
            length = 1.0 / self.frequency_at(t)
            out.append((t, length))
            t += length
        return np.array(out).reshape(-1, 2)


def drive_voltage(source: DriveSource, t: float) -> float:
    """Voltage of the rectangular drive at time ``t``."""
    if source.schedule is not None and len(source.schedule):
        sched = source.schedule
        if t < sched[0, 0] or t >= sched[-1, 0] + sched[-1, 1]:
            raise ScheduleExhaustedError(f"t = {t!r} outside the recorded schedule")
        i = int(np.searchsorted(sched[:, 0], t, side="right")) - 1
        start, length = sched[i]
    else:
        if source.mode != "open_loop":
            raise ScheduleExhaustedError("PLL drive has no schedule before a run")
        if t < source.first_edge:
            raise ScheduleExhaustedError(f"t = {t!r} precedes the first edge")
        if source.sweep is None:
            length = source.period
            start = source.first_edge + math.floor((t - source.first_edge) / length) * length
        else:
            start = source.first_edge
            length = 1.0 / source.frequency_at(start)
            while start + length <= t:
                start += length
                length = 1.0 / source.frequency_at(start)
    return source.hv_voltage if (t - start) < source.duty * length else 0.0


@dataclass(frozen=True)
class PllState:
    """Discrete PLL state after ``index`` updates.

    Attributes
    ----------
    t_pll : float
        Current PLL (actuation) period [s].
    t_beta : float
        Current phase in time [s].
    t_beta_ref : float
        Phase reference [s].
    gains : PllGains
    accum : float
        Sum of phase errors not suppressed by the clamp [s].
    t_nominal : float
        Period the clamp limits refer to [s].
    index : int
    """

    t_pll: float
    t_beta: float
    t_beta_ref: float
    gains: PllGains = DEFAULT_GAINS
    accum: float = 0.0
    t_nominal: Optional[float] = None
    clamp: tuple = (0.5, 2.0)
    index: int = 0

    @property
    def limits(self) -> tuple[float, float]:
        nominal = self.t_nominal if self.t_nominal is not None else self.t_pll
        return self.clamp[0] * nominal, self.clamp[1] * nominal


def phase_error(state: PllState) -> float:
    """``t_beta_ref - t_beta``; positive when the crossing comes early."""
    return state.t_beta_ref - state.t_beta


def pll_update(state: PllState, t_m: float) -> PllState:
    """Advance the loop by one half mirror period of length ``t_m``.

    The PI law uses the error of the current state; the phase then moves by
    the new PLL period minus ``t_m`` (the mirror period is taken as constant
    over the step).
    """
    if not (math.isfinite(t_m) and t_m > 0):
        raise ValueError("T_m must be positive and finite")
    if not all(math.isfinite(v) for v in (state.t_pll, state.t_beta, state.accum)):
        raise ValueError("non-finite PLL state")
    err = phase_error(state)
    lo, hi = state.limits
    t_new, accum = pll_step(state.t_pll, t_m, err, state.accum,
                            state.gains.kp, state.gains.ki, lo, hi)
    nominal = state.t_nominal if state.t_nominal is not None else state.t_pll
    return replace(state, t_pll=t_new, t_beta=state.t_beta - t_m + t_new,
                   accum=accum, t_nominal=nominal, index=state.index + 1)


def write_pll_history_csv(history: np.ndarray, path) -> None:
    """PLL history with columns ``i, T_m, T_pll, t_beta, e`` (times in s)."""
    rows = np.column_stack([np.arange(len(history)), history[:, 1], history[:, 5],
                            history[:, 2], history[:, 3]])
    np.savetxt(path, rows, delimiter=",", fmt=["%d", "%.12e", "%.12e", "%.12e", "%.12e"],
               header="mirrorvib pll-history v1\ni,T_m[s],T_pll[s],t_beta[s],e[s]",
               comments="# ")


def run_pll_loop(params, initial, profile, gains: PllGains, span, config=None, *,
                 ref: Optional[float] = None, period: Optional[float] = None,
                 checkpoint=None, start_period: Optional[float] = None):
    """Simulate the mirror under PLL control.

    The mirror must already oscillate on the high-amplitude branch; pass the
    ``checkpoint`` from :func:`mirrorvib.engine.settle` (or ``initial`` plus
    explicit ``ref`` and ``period``). ``start_period`` overrides the first
    PLL period, e.g. to start the loop off lock. Returns ``(trace, history)`` where
    ``history`` has columns ``crossing time, T_m, t_beta, e, T_pll used,
    T_pll next``.
    """
    from .engine import integrate

    if checkpoint is not None:
        ref = checkpoint.t_beta_ref if ref is None else ref
        period = checkpoint.period if period is None else period
        initial = checkpoint.state
    if ref is None or period is None:
        raise ValueError("PLL needs a phase reference and a nominal period")
    drive = DriveSource.pll(period, ref, gains, hv_voltage=params.hv_voltage,
                            duty=params.duty, start_period=start_period)
    trace = integrate(params, initial, drive, profile, span, config, checkpoint=checkpoint)
    return trace, trace.history
