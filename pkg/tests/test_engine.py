import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from mirrorvib.control import DriveSource
from mirrorvib.curves import NonlinearCurve
from mirrorvib.engine import (DivergenceError, IntegratorConfig, TooFewCrossingsError, Trace,
                              detect_crossings, integrate, measure_cycles, settle)
from mirrorvib.model import SimState, VibrationProfile, damping_torque, vibration_torque

K0, C0 = 1.5e-4, 4e-11


def linear(params, c0=0.0):
    return params.with_(stiffness=NonlinearCurve.polynomial([K0], "even", 0.8),
                        damping_base=NonlinearCurve.polynomial([c0], "even", 0.8))


def undriven(params):
    return DriveSource.open_loop(2 * params.f_ref, hv_voltage=0.0)


def sampled_trace(t, theta, omega=None):
    cr = detect_crossings(theta, t, omega)
    om = np.gradient(theta, t) if omega is None else omega
    empty = np.empty((0, 2))
    return Trace(t, theta, om, np.zeros_like(t), cr, empty, np.empty((0, 6)), empty, None)


def test_linear_oscillator_period(params):
    p = linear(params)
    tr = integrate(p, SimState(0.0, 0.2, 0.0), undriven(p), VibrationProfile.none(),
                   (0.0, 50 / p.linear_frequency()), IntegratorConfig(store_samples=False))
    cy = measure_cycles(tr)
    period = 2 * np.mean(cy.half_periods)
    assert period == pytest.approx(2 * math.pi * math.sqrt(p.inertia / K0), rel=1e-6)


def test_damped_oscillator_decay_rate(params):
    p = linear(params, C0)
    tr = integrate(p, SimState(0.0, 0.2, 0.0), undriven(p), VibrationProfile.none(),
                   (0.0, 200 / p.linear_frequency()), IntegratorConfig(store_samples=False))
    ext = tr.extrema
    t, a = ext[:, 0], np.abs(ext[:, 1])
    rate = -np.polyfit(t, np.log(a), 1)[0]
    assert rate == pytest.approx(C0 / (2 * p.inertia), rel=1e-4)


def test_rk4_is_fourth_order(params):
    s0 = SimState(0.0, params.theta_ref, 0.0)
    drive = DriveSource.open_loop(2 * params.f_ref, params.hv_voltage, params.duty)

    def end(n):
        cfg = IntegratorConfig(method="rk4", dt=drive.period / n, store_samples=False)
        return integrate(params, s0, drive, VibrationProfile.none(),
                         (0.0, 5 / params.f_ref), cfg).final.state.theta

    ref = end(2048)
    assert abs(end(48) - ref) / abs(end(96) - ref) == pytest.approx(16, abs=3)


def test_crossing_lies_on_trajectory(params):
    drive = DriveSource.open_loop(2 * params.f_ref, params.hv_voltage, params.duty)
    s0 = SimState(0.0, params.theta_ref, 0.0)
    tr = integrate(params, s0, drive, VibrationProfile.none(), (0.0, 3 / params.f_ref))
    tc = tr.crossings[2, 0]
    end = integrate(params, s0, drive, VibrationProfile.none(), (0.0, tc),
                    IntegratorConfig(store_samples=False))
    assert abs(end.final.state.theta) < 1e-9 * params.theta_ref


def test_energy_audit_without_drive(params):
    # work of damping and vibration torques accounts for the energy change
    drive = undriven(params)
    prof = VibrationProfile("ty", 200.0, 2060.0)
    cfg = IntegratorConfig(sample_rate=400 * params.f_ref)
    s0 = SimState(0.0, params.theta_ref, 0.0)
    tr = integrate(params, s0, drive, prof, (0.0, 20 / params.f_ref), cfg)
    k0, _, k2 = params.stiffness.source["coeffs"]

    def energy(th, om):
        return 0.5 * params.inertia * om ** 2 + k0 * th ** 2 / 2 + k2 * th ** 4 / 4

    power = (vibration_torque(params, tr.theta, tr.times, prof)
             - damping_torque(params, tr.theta, tr.omega)) * tr.omega
    work = simpson(power, x=tr.times)
    change = energy(tr.theta[-1], tr.omega[-1]) - energy(tr.theta[0], tr.omega[0])
    assert change == pytest.approx(work, rel=1e-6)


def test_checkpoint_resume_matches_single_run(params):
    drive = DriveSource.open_loop(2 * params.f_ref, params.hv_voltage, params.duty)
    cfg = IntegratorConfig(method="rk4", store_samples=False)
    s0 = SimState(0.0, 0.5 * params.theta_ref, 0.0)
    t1, t2 = 4 * drive.period, 9 * drive.period
    whole = integrate(params, s0, drive, VibrationProfile.none(), (0.0, t2), cfg)
    first = integrate(params, s0, drive, VibrationProfile.none(), (0.0, t1), cfg)
    second = integrate(params, first.final.state, drive, VibrationProfile.none(), (t1, t2), cfg,
                       checkpoint=first.final)
    assert second.final.state.theta == pytest.approx(whole.final.state.theta, rel=1e-12)
    np.testing.assert_allclose(np.r_[first.crossings[:, 0], second.crossings[:, 0]],
                               whole.crossings[:, 0], rtol=1e-13)


def test_divergence_reports_last_time(params):
    huge = VibrationProfile("ty", 1e6, 2000.0)
    with pytest.raises(DivergenceError) as err:
        integrate(params, SimState(0.0, 0.1, 0.0), undriven(params), huge, (0.0, 0.01))
    assert 0.0 < err.value.last_time < 0.01


def test_integrator_config_validation(params):
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=-1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(sample_rate=10 * params.f_ref).resolved(params, undriven(params))
    with pytest.raises(ValueError):
        integrate(params, SimState(0.0, 0.1, 0.0), undriven(params), VibrationProfile.none(),
                  (1.0, 0.5))


def test_settle_reaches_reference_amplitude(params):
    ck = settle(params, config=IntegratorConfig(method="rk4"))
    assert ck.amplitude == pytest.approx(params.theta_ref, rel=0.01)
    assert ck.period == pytest.approx(0.5 / params.f_ref, rel=1e-12)
    assert 0.0 < ck.t_beta_ref < ck.period


# ---- crossings and cycles ----------------------------------------------------

def test_crossings_of_known_sine():
    t = np.arange(0.0, 3.0001, 1e-3)
    cr = detect_crossings(np.sin(2 * np.pi * t), t, 2 * np.pi * np.cos(2 * np.pi * t))
    inner = cr[(cr[:, 0] > 0.25) & (cr[:, 0] < 2.9)]
    np.testing.assert_allclose(inner[:, 0], [0.5, 1.0, 1.5, 2.0, 2.5], atol=1e-8)
    assert list(inner[:, 1]) == [-1, 1, -1, 1, -1]


def test_no_crossings_for_constant():
    t = np.linspace(0, 1, 50)
    assert detect_crossings(np.full(50, 0.3), t).shape == (0, 2)
    with pytest.raises(ValueError):
        detect_crossings([1.0], [0.0])


@given(st.floats(0.1, 1.0), st.floats(1.3, 3.7), st.floats(0.0, 6.28))
def test_crossings_match_bisection_oracle(a2, f2, ph):
    t = np.linspace(0.0, 2.0, 801)
    y = np.sin(2 * np.pi * t) + a2 * np.sin(2 * np.pi * f2 * t + ph)
    dy = 2 * np.pi * (np.cos(2 * np.pi * t) + a2 * f2 * np.cos(2 * np.pi * f2 * t + ph))
    spline = CubicHermiteSpline(t, y, dy)
    cr = detect_crossings(y, t, dy)
    for tc in cr[:, 0]:
        i = np.searchsorted(t, tc) - 1
        root = brentq(spline, t[i], t[i + 1], xtol=1e-15)
        assert abs(root - tc) < 1e-9


def test_cycles_of_pure_sine():
    f, amp = 2000.0, 0.26
    t = np.arange(0.0, 0.02, 1 / (64 * f))
    th = amp * np.sin(2 * np.pi * f * t + 0.4)
    cy = measure_cycles(sampled_trace(t, th, amp * 2 * np.pi * f * np.cos(2 * np.pi * f * t + 0.4)))
    np.testing.assert_allclose(cy.half_periods, 1 / (2 * f), rtol=1e-9)
    np.testing.assert_allclose(cy.amplitudes, amp, rtol=1e-7)
    np.testing.assert_allclose(cy.frequencies, f, rtol=1e-9)


def test_cycles_of_modulated_sine():
    f, fb = 2000.0, 40.0
    t = np.arange(0.0, 0.2, 1 / (64 * f))
    th = (1 + 0.1 * np.sin(2 * np.pi * fb * t)) * np.sin(2 * np.pi * f * t)
    cy = measure_cycles(sampled_trace(t, th))
    a = cy.amplitudes
    assert 0.5 * (a.max() - a.min()) == pytest.approx(0.10, abs=0.005)
    spec = np.abs(np.fft.rfft(a - a.mean()))
    freqs = np.fft.rfftfreq(a.size, d=np.mean(cy.half_periods))
    assert freqs[np.argmax(spec)] == pytest.approx(fb, abs=freqs[1])


def test_cycles_track_chirp():
    f0, rate = 1900.0, 2000.0
    t = np.arange(0.0, 0.1, 1 / (128 * f0))
    th = np.sin(2 * np.pi * (f0 * t + 0.5 * rate * t ** 2))
    cy = measure_cycles(sampled_trace(t, th))
    mid = cy.times - 0.5 * cy.half_periods
    np.testing.assert_allclose(cy.frequencies, f0 + rate * mid, rtol=0.01)


def test_too_few_crossings():
    t = np.linspace(0.0, 1.0, 100)
    with pytest.raises(TooFewCrossingsError):
        measure_cycles(sampled_trace(t, np.sin(np.pi * t + 0.1)))


def test_window_selects_range():
    t = np.arange(0.0, 0.01, 1 / (64 * 2000.0))
    cy = measure_cycles(sampled_trace(t, np.sin(2 * np.pi * 2000 * t + 0.2)))
    w = cy.window(0.002, 0.004)
    assert len(w) and w.times.min() >= 0.002 and w.times.max() <= 0.004
