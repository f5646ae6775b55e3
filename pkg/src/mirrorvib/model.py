"""Single-degree-of-freedom model of a comb-driven resonant scanning mirror.

Equation of motion::

    I*theta'' + c(theta, theta')*theta' + k(theta)*theta
        = 0.5 * dC/dtheta * V**2 + tau_v

with the vibration torque ``tau_v = m*L*(d_y*cos(theta) + d_z*sin(theta))``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .curves import CurveDomainError, NonlinearCurve

__all__ = [
    "MirrorParams", "VibrationProfile", "SimState", "CurveDomainError",
    "restoring_torque", "damping_torque", "comb_torque", "vibration_torque",
    "equation_rhs", "load_params", "save_params", "default_params",
    "g_rms_to_peak", "G0",
]

G0 = 9.80665  # standard gravity [m/s^2]


def g_rms_to_peak(g_rms: float) -> float:
    """Peak acceleration [m/s^2] of a sine with the given RMS in units of g."""
    return math.sqrt(2.0) * g_rms * G0


@dataclass(frozen=True)
class MirrorParams:
    """Physical constants and characteristic curves of one mirror.

    Attributes
    ----------
    inertia : float
        Moment of inertia of the scan mode [kg m^2].
    mass : float
        Mirror mass [kg].
    com_offset : float
        Distance between rotation axis and center of mass [m].
    stiffness : NonlinearCurve
        k(theta) [N m/rad], odd parity is not required: k is even, k*theta odd.
    damping_base, damping_amp : NonlinearCurve
        c(theta, omega) = damping_base(theta) + damping_amp(theta)*|omega|.
    cap_deriv : NonlinearCurve
        dC/dtheta [F/rad], odd.
    theta_ref, f_ref : float
        Normalization amplitude [rad] and mirror frequency [Hz].
    hv_voltage, duty : float
        Nominal rectangular drive (amplitude [V], duty cycle).
    """

    inertia: float
    mass: float
    com_offset: float
    stiffness: NonlinearCurve
    damping_base: NonlinearCurve
    damping_amp: NonlinearCurve
    cap_deriv: NonlinearCurve
    theta_ref: float
    f_ref: float
    hv_voltage: float = 100.0
    duty: float = 0.6
    name: str = "mirror"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for attr in ("inertia", "mass", "theta_ref", "f_ref", "hv_voltage"):
            v = getattr(self, attr)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{attr} must be positive, got {v!r}")
        if not (math.isfinite(self.com_offset) and self.com_offset >= 0):
            raise ValueError("com_offset must be >= 0")
        if not 0.0 < self.duty < 1.0:
            raise ValueError("duty must lie in (0, 1)")
        if self.stiffness.parity != "even":
            raise ValueError("stiffness k(theta) must be even so k*theta is odd")
        if self.cap_deriv.parity != "odd":
            raise ValueError("cap_deriv must be odd")
        for name in ("damping_base", "damping_amp"):
            curve = getattr(self, name)
            if curve.parity != "even":
                raise ValueError(f"{name} must be even")
            grid = np.linspace(0.0, curve.domain[1], 257)
            if np.any(curve(grid) < 0.0):
                raise ValueError(f"{name} must be non-negative (dissipative)")

    @property
    def theta_limit(self) -> float:
        """Largest angle inside every curve domain."""
        return min(c.domain[1] for c in (self.stiffness, self.damping_base,
                                         self.damping_amp, self.cap_deriv))

    @property
    def coupling(self) -> float:
        """m*L [kg m]; the only way mass and offset enter the dynamics."""
        return self.mass * self.com_offset

    def with_(self, **changes) -> "MirrorParams":
        return replace(self, **changes)

    def without_hardening(self) -> "MirrorParams":
        """Copy with the stiffness replaced by its small-angle value k(0)."""
        k0 = float(self.stiffness(0.0))
        flat = NonlinearCurve.polynomial([k0], "even", self.stiffness.domain[1])
        return replace(self, stiffness=flat)

    def linear_frequency(self) -> float:
        """Small-angle undriven natural frequency [Hz]."""
        return math.sqrt(float(self.stiffness(0.0)) / self.inertia) / (2 * math.pi)


@dataclass(frozen=True)
class VibrationProfile:
    """Single-tone translational acceleration acting on the mirror frame.

    Parameters
    ----------
    axis : {"ty", "tz"}
    amplitude : float
        Peak acceleration a [m/s^2].
    frequency : float
        Tone frequency [Hz].
    phase : float
        Phase at t = 0 [rad].
    t_on : float
        Step onset; no torque before it [s].
    misalignment : float
        Rotation of the shaking axis in the y-z plane [rad], |eps| <= 0.1.
    samples : tuple, optional
        ``(t, a_y, a_z)`` arrays of a recorded acceleration; when given it
        replaces the tone (linear interpolation, zero outside the record).
    """

    axis: str = "ty"
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    t_on: float = 0.0
    misalignment: float = 0.0
    samples: Optional[tuple] = None

    def __post_init__(self):
        if self.axis not in ("ty", "tz"):
            raise ValueError("axis must be 'ty' or 'tz'")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError("amplitude must be >= 0")
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise ValueError("frequency must be > 0")
        if not abs(self.misalignment) <= 0.1:
            raise ValueError("misalignment must lie in [-0.1, 0.1] rad")
        if not (math.isfinite(self.phase) and math.isfinite(self.t_on)):
            raise ValueError("phase and t_on must be finite")

    @classmethod
    def none(cls) -> "VibrationProfile":
        return cls()

    @classmethod
    def from_csv(cls, path, t_on: float = 0.0) -> "VibrationProfile":
        """Recorded acceleration with columns ``time, a_y, a_z`` (SI units)."""
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 3:
            raise ValueError("acceleration CSV needs columns time, a_y, a_z")
        t, ay, az = (np.ascontiguousarray(col) for col in data.T)
        if np.any(np.diff(t) <= 0):
            raise ValueError("acceleration CSV time column must increase")
        return cls(axis="ty", amplitude=float(np.max(np.hypot(ay, az))),
                   t_on=t_on, samples=(t, ay, az))

    @property
    def axis_weights(self) -> tuple[float, float]:
        """(w_y, w_z) so that d_y = w_y*d and d_z = w_z*d."""
        ce, se = math.cos(self.misalignment), math.sin(self.misalignment)
        return (ce, se) if self.axis == "ty" else (se, ce)

    def acceleration(self, t):
        """(d_y, d_z) at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if self.samples is not None:
            ts, ay, az = self.samples
            inside = (t > ts[0]) & (t < ts[-1]) & (t >= self.t_on)
            return (np.where(inside, np.interp(t, ts, ay), 0.0),
                    np.where(inside, np.interp(t, ts, az), 0.0))
        d = self.amplitude * np.cos(2 * np.pi * self.frequency * t + self.phase)
        d = np.where(t >= self.t_on, d, 0.0)
        wy, wz = self.axis_weights
        return wy * d, wz * d


@dataclass(frozen=True)
class SimState:
    """Instantaneous mechanical state."""

    t: float
    theta: float
    omega: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.t, self.theta, self.omega)):
            raise ValueError("SimState fields must be finite")


def restoring_torque(params: MirrorParams, theta):
    """k(theta)*theta [N m]."""
    return params.stiffness(theta) * np.asarray(theta, dtype=float)


def damping_torque(params: MirrorParams, theta, omega):
    """c(theta, omega)*omega [N m]; always opposes omega."""
    omega = np.asarray(omega, dtype=float)
    c = params.damping_base(theta)
    if not params.damping_amp.is_zero:
        c = c + params.damping_amp(theta) * np.abs(omega)
    return c * omega


def comb_torque(params: MirrorParams, theta, voltage):
    """0.5*dC/dtheta*V**2 [N m]."""
    voltage = np.asarray(voltage, dtype=float)
    if np.any(voltage < 0):
        raise ValueError("drive voltage must be >= 0")
    return 0.5 * params.cap_deriv(theta) * voltage ** 2


def vibration_torque(params: MirrorParams, theta, t, profile: VibrationProfile):
    """Torque from frame acceleration through the center-of-mass offset [N m]."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be >= 0")
    theta = np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(t))):
        raise ValueError("non-finite input")
    dy, dz = profile.acceleration(t)
    return params.coupling * (dy * np.cos(theta) + dz * np.sin(theta))


def equation_rhs(params: MirrorParams, state: SimState, voltage: float,
                 profile: VibrationProfile) -> tuple[float, float]:
    """First-order form (dtheta/dt, domega/dt)."""
    th, om = state.theta, state.omega
    torque = (comb_torque(params, th, voltage)
              + vibration_torque(params, th, state.t, profile)
              - damping_torque(params, th, om)
              - restoring_torque(params, th))
    return om, float(torque) / params.inertia


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_SCALARS = {
    "inertia": "inertia", "mass": "mass", "com_offset": "com_offset",
    "theta_ref": "theta_ref", "f_ref": "f_ref",
    "hv_voltage": "hv_voltage", "duty": "duty",
}
_CURVES = ("stiffness", "damping_base", "damping_amp", "cap_deriv")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace("\n", " ").replace(",", " ").split()]


def _read_curve(section: configparser.SectionProxy) -> NonlinearCurve:
    form = section.get("form", "polynomial")
    parity = section.get("parity", "none")
    if form == "polynomial":
        return NonlinearCurve.polynomial(_floats(section["coeffs"]), parity,
                                         section.getfloat("theta_max", 0.6))
    if form == "table":
        return NonlinearCurve.table(_floats(section["angles"]), _floats(section["values"]),
                                    parity)
    if form == "gauss_odd":
        # g(theta) = -gain * theta * exp(-(theta/width)**2), tabulated
        gain = section.getfloat("gain")
        width = section.getfloat("width")
        theta_max = section.getfloat("theta_max", 0.6)
        n = section.getint("points", 241)
        x = np.linspace(0.0, theta_max, n)
        return NonlinearCurve.table(x, -gain * x * np.exp(-(x / width) ** 2), "odd")
    raise ValueError(f"unknown curve form {form!r}")


def load_params(path=None) -> MirrorParams:
    """Read a ``.mirror`` file (INI syntax). ``None`` loads the shipped default."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        text = resources.files("mirrorvib").joinpath("data/default.mirror").read_text()
        cp.read_string(text)
        name = "default"
    else:
        with open(path) as fh:
            cp.read_file(fh)
        name = Path(path).stem
    if "mirror" not in cp:
        raise ValueError("config lacks a [mirror] section")
    m = cp["mirror"]
    kwargs = {key: m.getfloat(opt) for opt, key in _SCALARS.items() if opt in m}
    for curve in _CURVES:
        sec = f"curve.{curve}"
        if sec not in cp:
            if curve == "damping_amp":
                kwargs[curve] = NonlinearCurve.polynomial([0.0], "even")
                continue
            raise ValueError(f"config lacks [{sec}]")
        kwargs[curve] = _read_curve(cp[sec])
    meta = dict(cp["meta"]) if "meta" in cp else {}
    return MirrorParams(name=m.get("name", name), meta=meta, **kwargs)


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def save_params(params: MirrorParams, path) -> None:
    """Write ``params`` in the ``.mirror`` format read by :func:`load_params`."""
    cp = configparser.ConfigParser()
    cp["mirror"] = {"name": params.name}
    for opt, key in _SCALARS.items():
        cp["mirror"][opt] = repr(float(getattr(params, key)))
    for curve in _CURVES:
        src = getattr(params, curve).source
        sec = {"form": src["form"], "parity": src["parity"]}
        if src["form"] == "polynomial":
            sec["coeffs"] = _fmt(src["coeffs"])
            sec["theta_max"] = repr(src["theta_max"])
        else:
            sec["angles"] = _fmt(src["angles"])
            sec["values"] = _fmt(src["values"])
        cp[f"curve.{curve}"] = sec
    if params.meta:
        cp["meta"] = {k: str(v) for k, v in params.meta.items()}
    with open(path, "w") as fh:
        fh.write("# mirrorvib parameter file, format version 1\n")
        cp.write(fh)


def default_params() -> MirrorParams:
    """The calibrated synthetic parameter set shipped with the package."""
    return load_params(None)
