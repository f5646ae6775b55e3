from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirrorvib import experiments as ex
from mirrorvib.control import (DriveSource, PllGains, PllState, ScheduleExhaustedError,
                               drive_voltage, phase_error, pll_update, run_pll_loop,
                               write_pll_history_csv)
from mirrorvib.engine import IntegratorConfig, integrate, measure_cycles
from mirrorvib.model import VibrationProfile, g_rms_to_peak

US = 1e-6
RK4 = IntegratorConfig(method="rk4", store_samples=False)


# ---- drive ---------------------------------------------------------------------

def test_rectangular_drive_examples():
    d = DriveSource.open_loop(1 / (250 * US), hv_voltage=100.0, duty=0.6)
    assert drive_voltage(d, 100 * US) == 100.0
    assert drive_voltage(d, 200 * US) == 0.0
    assert drive_voltage(d, 3 * 250 * US + 100 * US) == 100.0


def test_mean_square_voltage_equals_duty():
    d = DriveSource.open_loop(1 / (250 * US), hv_voltage=100.0, duty=0.6)
    t = (np.arange(100000) + 0.5) * (250 * US / 100000)
    v = np.array([drive_voltage(d, x) for x in t])
    assert np.mean(v ** 2) == pytest.approx(0.6 * 100.0 ** 2, rel=1e-4)


def test_open_loop_edges_are_periodic():
    d = DriveSource.open_loop(4000.0)
    e = d.edges(0.01)
    np.testing.assert_allclose(np.diff(e[:, 0]), 2.5e-4, rtol=1e-9)
    np.testing.assert_allclose(e[:, 1], 2.5e-4)


def test_schedule_exhausted():
    pll = DriveSource.pll(2.5e-4, 1e-4)
    with pytest.raises(ScheduleExhaustedError):
        pll.edges(1.0)
    with pytest.raises(ScheduleExhaustedError):
        drive_voltage(pll, 0.0)
    sched = DriveSource.open_loop(4000.0).with_(schedule=np.array([[0.0, 2.5e-4]]))
    with pytest.raises(ScheduleExhaustedError):
        drive_voltage(sched, 3e-4)


@pytest.mark.parametrize("kw", [{"duty": 0.0}, {"duty": 1.0}, {"hv_voltage": -1.0},
                                {"period": 0.0}, {"mode": "auto"}])
def test_drive_validation(kw):
    with pytest.raises(ValueError):
        DriveSource(**kw)


def test_swept_drive_frequency():
    d = DriveSource.open_loop(4000.0, sweep=(0.0, 1.0, 4400.0, 4000.0))
    assert d.frequency_at(-1.0) == 4400.0
    assert d.frequency_at(0.5) == pytest.approx(4200.0)
    assert d.frequency_at(2.0) == 4000.0


# ---- PLL arithmetic -----------------------------------------------------------

def test_phase_error_examples():
    s = PllState(250 * US, 10 * US, 10 * US)
    assert phase_error(s) == 0.0
    assert phase_error(replace(s, t_beta=8 * US)) == pytest.approx(2 * US)
    assert phase_error(replace(s, t_beta=12 * US)) < 0


def test_update_fixed_point():
    s = PllState(250 * US, 40 * US, 40 * US)
    n = pll_update(s, 250 * US)
    assert n.t_pll == s.t_pll and n.t_beta == s.t_beta and n.index == 1


def test_update_hand_example():
    s = PllState(250 * US, 9 * US, 10 * US, PllGains(0.5, 0.1))
    assert pll_update(s, 251 * US).t_pll == pytest.approx(250.6 * US, rel=1e-12)


def test_proportional_only_tracks_frequency_not_phase():
    kp, t_m = 0.3, 251 * US
    s = PllState(250 * US, 40 * US, 40 * US, PllGains(kp, 0.0))
    for n in range(1, 60):
        s = pll_update(s, t_m)
        assert s.t_pll - t_m == pytest.approx((1 - kp) ** n * (250 * US - t_m), abs=1e-18)
    # the phase drifted while the period converged and is never pulled back
    assert abs(phase_error(s)) > 1 * US
    before = phase_error(s)
    assert phase_error(pll_update(s, t_m)) == pytest.approx(before, abs=1e-15)


def test_update_rejects_bad_input():
    s = PllState(250 * US, 40 * US, 40 * US)
    with pytest.raises(ValueError):
        pll_update(s, 0.0)
    with pytest.raises(ValueError):
        pll_update(s, float("nan"))
    with pytest.raises(ValueError):
        pll_update(replace(s, t_beta=float("inf")), 250 * US)


def test_clamp_freezes_accumulator():
    s = PllState(250 * US, 0.0, 200 * US, PllGains(0.3, 5.0))
    n = pll_update(s, 250 * US)
    assert n.t_pll == 500 * US and n.accum == 0.0
    n = pll_update(replace(s, t_beta_ref=-400 * US), 250 * US)
    assert n.t_pll == 125 * US and n.accum == 0.0


tm_lists = st.lists(st.floats(240 * US, 260 * US), min_size=1, max_size=40)


@given(tm_lists, st.floats(0.0, 1.0), st.floats(0.0, 0.3), st.floats(-5 * US, 5 * US))
def test_phase_propagation_identity(tms, kp, ki, e0):
    s = PllState(250 * US, 50 * US, 50 * US + e0, PllGains(kp, ki))
    for t_m in tms:
        n = pll_update(s, t_m)
        assert n.t_beta - s.t_beta + t_m - n.t_pll == pytest.approx(0.0, abs=1e-18)
        s = n


@given(tm_lists, st.lists(st.floats(-2 * US, 2 * US), min_size=40, max_size=40),
       st.floats(0.0, 1.0), st.floats(0.0, 0.3))
def test_incremental_law_matches_accumulated_form(tms, errs, kp, ki):
    # absolute form: T_n = T_0 + kP * sum(T_m - T_pll) + kI * sum(e)
    t0 = 250 * US
    s = PllState(t0, 0.0, 0.0, PllGains(kp, ki))
    p_sum = 0.0
    e_sum = 0.0
    for t_m, e in zip(tms, errs):
        s = replace(s, t_beta=s.t_beta_ref - e)
        p_sum += t_m - s.t_pll
        e_sum += e
        s = pll_update(s, t_m)
        assert s.accum == pytest.approx(e_sum, rel=1e-12, abs=1e-21)
        assert s.t_pll == pytest.approx(t0 + kp * p_sum + ki * e_sum, rel=1e-12)


# ---- closed loop --------------------------------------------------------------

@pytest.fixture(scope="module")
def op(params):
    return ex.operating_point(params, RK4)


def test_zero_gains_reproduce_open_loop(params, op):
    f_m = 0.5 / op.period
    span = (op.t, op.t + 50 / f_m)
    tr_pll, _ = run_pll_loop(params, None, VibrationProfile.none(), PllGains(0.0, 0.0), span,
                             RK4, checkpoint=op)
    drive = DriveSource.open_loop(1 / op.period, params.hv_voltage, params.duty)
    tr_ol = integrate(params, op.state, drive, VibrationProfile.none(), span, RK4, checkpoint=op)
    np.testing.assert_allclose(tr_pll.crossings, tr_ol.crossings, rtol=0, atol=1e-15)
    assert tr_pll.final.state.theta == tr_ol.final.state.theta


def test_bumpless_start_keeps_lock(params, op):
    f_m = 0.5 / op.period
    _, hist = run_pll_loop(params, None, VibrationProfile.none(), PllGains(), (op.t, op.t + 100 / f_m),
                           RK4, checkpoint=op)
    assert np.max(np.abs(hist[:, 3])) < 1e-3 * op.t_beta_ref
    # rising and falling crossings sit on either side of the mean reference
    np.testing.assert_allclose(hist[:, 5], op.period, rtol=5e-5)


def test_period_error_decays(params, op):
    f_m = 0.5 / op.period
    _, hist = run_pll_loop(params, None, VibrationProfile.none(), PllGains(),
                           (op.t, op.t + 300 / f_m), RK4, checkpoint=op,
                           start_period=1.005 * op.period)
    e = np.abs(hist[:, 3])
    assert e[:20].max() > 1e-2 * op.t_beta_ref
    assert e[-50:].max() < 1e-3 * op.t_beta_ref


def test_far_tone_keeps_mean_frequency(params, op):
    f_m = 0.5 / op.period
    prof = VibrationProfile("ty", g_rms_to_peak(2.0), 1.5 * f_m, 0.0, op.t)
    tr, _ = run_pll_loop(params, None, prof, PllGains(), (op.t, op.t + 1000 / f_m), RK4,
                         checkpoint=op)
    cy = measure_cycles(tr).window(op.t + 200 / f_m, np.inf)
    assert np.mean(cy.frequencies) == pytest.approx(f_m, rel=1e-5)


def test_history_csv(tmp_path, params, op):
    f_m = 0.5 / op.period
    _, hist = run_pll_loop(params, None, VibrationProfile.none(), PllGains(), (op.t, op.t + 10 / f_m),
                           RK4, checkpoint=op)
    path = tmp_path / "pll.csv"
    write_pll_history_csv(hist, path)
    lines = path.read_text().splitlines()
    assert lines[1] == "# i,T_m[s],T_pll[s],t_beta[s],e[s]"
    data = np.loadtxt(path, delimiter=",")
    assert data.shape == (len(hist), 5)
    np.testing.assert_allclose(data[:, 4], hist[:, 3])
