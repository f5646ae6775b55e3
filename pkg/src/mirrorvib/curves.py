"""Angle-dependent characteristic curves (stiffness, damping, comb capacitance).

Every curve is stored as a piecewise polynomial in scipy's ``PPoly`` layout.
Curves with a declared parity are stored over ``[0, theta_max]`` only and
mirrored on evaluation, so ``f(-x) == -f(x)`` (odd) or ``f(-x) == f(x)``
(even) holds bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy.interpolate import CubicSpline

PARITY_CODES = {"none": 0, "odd": 1, "even": 2}


class CurveDomainError(ValueError):
    """Evaluation requested outside the declared angle interval."""


@numba.njit(cache=True)
def ppoly_eval(x, c, parity, v):
    """Evaluate a piecewise polynomial with optional parity mirroring."""
    a = abs(v) if parity != 0 else v
    n = x.shape[0] - 1
    i = np.searchsorted(x, a, side="right") - 1
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    dx = a - x[i]
    r = 0.0
    for k in range(c.shape[0]):
        r = r * dx + c[k, i]
    if parity == 1 and v < 0.0:
        return -r
    return r


@numba.njit(cache=True)
def ppoly_deriv(x, c, parity, v):
    """First derivative of :func:`ppoly_eval` with respect to ``v``."""
    a = abs(v) if parity != 0 else v
    n = x.shape[0] - 1
    i = np.searchsorted(x, a, side="right") - 1
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    dx = a - x[i]
    deg = c.shape[0] - 1
    r = 0.0
    for k in range(deg):
        r = r * dx + (deg - k) * c[k, i]
    # f(-a) = -f(a) has an even derivative; f(-a) = f(a) an odd one
    if parity == 2 and v < 0.0:
        return -r
    return r


@dataclass(frozen=True)
class NonlinearCurve:
    """A scalar function of the mirror angle.

    Build instances with :meth:`polynomial` or :meth:`table` rather than
    calling the constructor directly.

    Attributes
    ----------
    breaks : ndarray
        Breakpoints of the piecewise polynomial, increasing.
    coeffs : ndarray, shape (degree + 1, n_pieces)
        Local power-basis coefficients, highest power first.
    parity : {"odd", "even", "none"}
    domain : tuple of float
        Valid angle interval ``(lo, hi)`` in rad.
    source : dict
        The construction recipe, kept for round-tripping to config files.
    """

    breaks: np.ndarray
    coeffs: np.ndarray
    parity: str
    domain: tuple[float, float]
    source: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.parity not in PARITY_CODES:
            raise ValueError(f"unknown parity {self.parity!r}")
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError("empty curve domain")
        if self.parity != "none" and lo != -hi:
            raise ValueError("a curve with parity needs a symmetric domain")
        for arr in (self.breaks, self.coeffs):
            arr.setflags(write=False)

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], parity: str = "none",
                   theta_max: float = 0.6) -> "NonlinearCurve":
        """Polynomial ``sum(coeffs[k] * theta**k)`` on ``[-theta_max, theta_max]``.

        Coefficients are given lowest power first. Powers that contradict the
        declared parity are rejected.
        """
        p = np.asarray(coeffs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("polynomial needs at least one coefficient")
        if parity == "odd" and np.any(p[0::2] != 0.0):
            raise ValueError("odd polynomial must have zero even-power coefficients")
        if parity == "even" and np.any(p[1::2] != 0.0):
            raise ValueError("even polynomial must have zero odd-power coefficients")
        lo = 0.0 if parity != "none" else -theta_max
        if parity == "none":
            # re-expand around the left break so ppoly_eval can use dx = v - lo
            c = np.polynomial.polynomial.Polynomial(p)(
                np.polynomial.polynomial.Polynomial([lo, 1.0])).coef
            c = np.pad(c, (0, p.size - c.size))
        else:
            c = p
        breaks = np.array([lo, theta_max])
        return cls(breaks, c[::-1].reshape(-1, 1).copy(), parity,
                   (-theta_max, theta_max),
                   {"form": "polynomial", "coeffs": [float(v) for v in p],
                    "parity": parity, "theta_max": float(theta_max)})

    @classmethod
    def table(cls, angles: Sequence[float], values: Sequence[float],
              parity: str = "none") -> "NonlinearCurve":
        """Cubic spline through sampled ``(angle, value)`` pairs.

        For ``odd``/``even`` parity supply samples on ``[0, theta_max]``; the
        spline end condition at zero makes the mirrored curve C1 there.
        """
        x = np.asarray(angles, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.shape != y.shape or x.ndim != 1 or x.size < 4:
            raise ValueError("table needs matching 1-D angle/value arrays (>= 4 points)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table angles must be strictly increasing")
        if parity != "none":
            if x[0] != 0.0:
                raise ValueError("tables with parity start at angle 0")
            if parity == "odd" and y[0] != 0.0:
                raise ValueError("odd table must pass through zero")
            bc = ((2, 0.0), "not-a-knot") if parity == "odd" else ((1, 0.0), "not-a-knot")
            domain = (-x[-1], x[-1])
        else:
            bc = "not-a-knot"
            domain = (x[0], x[-1])
        spl = CubicSpline(x, y, bc_type=bc)
        return cls(np.array(spl.x), np.array(spl.c), parity, domain,
                   {"form": "table", "angles": [float(v) for v in x],
                    "values": [float(v) for v in y], "parity": parity})

    @property
    def parity_code(self) -> int:
        return PARITY_CODES[self.parity]

    def _check(self, theta):
        lo, hi = self.domain
        th = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(th)):
            raise CurveDomainError("non-finite angle")
        if np.any(th < lo) or np.any(th > hi):
            raise CurveDomainError(
                f"angle outside curve domain [{lo:.6g}, {hi:.6g}] rad")
        return th

    def __call__(self, theta):
        th = self._check(theta)
        if th.ndim == 0:
            return ppoly_eval(self.breaks, self.coeffs, self.parity_code, float(th))
        out = np.empty(th.shape)
        flat = th.ravel()
        for k in range(flat.size):
            out.flat[k] = ppoly_eval(self.breaks, self.coeffs, self.parity_code, flat[k])
        return out

    def derivative(self, theta):
        th = self._check(theta)
        if th.ndim == 0:
            return ppoly_deriv(self.breaks, self.coeffs, self.parity_code, float(th))
        return np.array([ppoly_deriv(self.breaks, self.coeffs, self.parity_code, v)
                         for v in th.ravel()]).reshape(th.shape)

    def scaled(self, factor: float) -> "NonlinearCurve":
        """The same curve multiplied by a constant."""
        src = dict(self.source)
        if src.get("form") == "polynomial":
            src["coeffs"] = [factor * v for v in src["coeffs"]]
        elif src.get("form") == "table":
            src["values"] = [factor * v for v in src["values"]]
        return NonlinearCurve(self.breaks.copy(), factor * self.coeffs, self.parity,
                              self.domain, src)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)
