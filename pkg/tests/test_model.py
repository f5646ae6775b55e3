import configparser
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirrorvib.curves import CurveDomainError, NonlinearCurve
from mirrorvib.model import (SimState, VibrationProfile, comb_torque,
                             damping_torque, equation_rhs, g_rms_to_peak, load_params,
                             restoring_torque, save_params, vibration_torque)

angles = st.floats(-0.6, 0.6, allow_nan=False)
rates = st.floats(-1e5, 1e5, allow_nan=False)


def linear(params, k0=1e-4, c0=1e-11):
    return params.with_(stiffness=NonlinearCurve.polynomial([k0], "even", 0.8),
                        damping_base=NonlinearCurve.polynomial([c0], "even", 0.8),
                        damping_amp=NonlinearCurve.polynomial([0.0], "even", 0.8))


def test_g_rms_to_peak():
    assert g_rms_to_peak(2.0) == pytest.approx(27.7374, abs=1e-4)
    assert 2 * g_rms_to_peak(2.0) == pytest.approx(55.48, abs=1e-2)


def test_restoring_torque_basics(params):
    assert restoring_torque(params, 0.0) == 0.0
    with pytest.raises(CurveDomainError):
        restoring_torque(params, 0.9)


def test_default_stiffness_matches_design_point(params):
    # oracle: evaluate the shipped polynomial coefficients directly
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(resources.files("mirrorvib").joinpath("data/default.mirror").read_text())
    k = [float(v) for v in cp["curve.stiffness"]["coeffs"].replace(",", " ").split()]
    th = params.theta_ref
    k_eval = sum(c * th ** i for i, c in enumerate(k)) * th
    h = float(cp["meta"]["hardening"])
    f_lin = math.sqrt(k[0] / params.inertia) / (2 * math.pi)
    assert h > 0
    assert k_eval == pytest.approx((2 * math.pi * f_lin) ** 2 * params.inertia * th * (1 + h),
                                   rel=1e-9)
    assert restoring_torque(params, th) == pytest.approx(k_eval, rel=1e-13)


def test_damping_examples(params):
    assert damping_torque(params, 0.1, 0.0) == 0.0
    lin = linear(params, c0=3e-11)
    assert damping_torque(lin, 0.3, 123.0) == 3e-11 * 123.0


def test_comb_examples(params):
    assert comb_torque(params, 0.2, 0.0) == 0.0
    assert comb_torque(params, 0.0, 100.0) == 0.0
    assert comb_torque(params, 0.2, 200.0) == pytest.approx(4 * comb_torque(params, 0.2, 100.0),
                                                           rel=1e-15)
    with pytest.raises(ValueError):
        comb_torque(params, 0.2, -1.0)


def test_vibration_torque_examples(params):
    assert vibration_torque(params, 0.3, 0.1, VibrationProfile("ty", 0.0, 10.0)) == 0.0
    assert vibration_torque(params, 0.0, 0.0, VibrationProfile("tz", 5.0, 10.0)) == 0.0
    unit = params.with_(mass=1.0, com_offset=1.0)
    tau = vibration_torque(unit, 0.1, 0.0, VibrationProfile("ty", 1.0, 7.0))
    assert tau == pytest.approx(0.995004, abs=1e-6)


def test_vibration_onset_and_misalignment():
    prof = VibrationProfile("tz", 2.0, 10.0, t_on=0.5, misalignment=math.radians(2))
    dy, dz = prof.acceleration(np.array([0.4, 0.5]))
    assert dy[0] == dz[0] == 0.0
    assert dz[1] == pytest.approx(2.0 * math.cos(math.radians(2)) * math.cos(2 * math.pi * 5))
    assert dy[1] == pytest.approx(2.0 * math.sin(math.radians(2)) * math.cos(2 * math.pi * 5))


@pytest.mark.parametrize("kw", [{"axis": "tx"}, {"amplitude": -1.0}, {"frequency": 0.0},
                                {"misalignment": 0.2}, {"phase": math.inf}])
def test_profile_validation(kw):
    with pytest.raises(ValueError):
        VibrationProfile(**kw)


def test_profile_from_csv(tmp_path):
    path = tmp_path / "acc.csv"
    path.write_text("# t,ay,az\n0,0,0\n1,2,0\n2,0,4\n")
    prof = VibrationProfile.from_csv(path)
    dy, dz = prof.acceleration(np.array([0.5, 1.5, 3.0]))
    np.testing.assert_allclose(dy, [1.0, 1.0, 0.0])
    np.testing.assert_allclose(dz, [0.0, 2.0, 0.0])


def test_rhs_rest_and_linear_reduction(params):
    assert equation_rhs(params, SimState(0.0, 0.0, 0.0), 0.0, VibrationProfile.none()) == (0.0, 0.0)
    lin = linear(params)
    th, om = 0.2, 50.0
    d_th, d_om = equation_rhs(lin, SimState(0.0, th, om), 0.0, VibrationProfile.none())
    assert d_th == om
    assert d_om == pytest.approx(-(1e-4 * th + 1e-11 * om) / lin.inertia, rel=1e-14)


def test_params_validation(params):
    with pytest.raises(ValueError):
        params.with_(inertia=-1.0)
    with pytest.raises(ValueError):
        params.with_(duty=1.0)
    with pytest.raises(ValueError):
        params.with_(cap_deriv=NonlinearCurve.polynomial([1.0], "even"))
    with pytest.raises(ValueError):
        params.with_(damping_base=NonlinearCurve.polynomial([-1e-12], "even"))


def test_params_roundtrip(params, tmp_path):
    path = tmp_path / "copy.mirror"
    save_params(params, path)
    back = load_params(path)
    for th in (-0.7, 0.0, 0.13, params.theta_ref):
        for name in ("stiffness", "damping_base", "damping_amp", "cap_deriv"):
            assert getattr(back, name)(th) == getattr(params, name)(th)
    assert back.coupling == params.coupling and back.f_ref == params.f_ref


def test_load_params_errors(tmp_path):
    bad = tmp_path / "bad.mirror"
    bad.write_text("[other]\nx = 1\n")
    with pytest.raises(ValueError):
        load_params(bad)
    with pytest.raises(OSError):
        load_params(tmp_path / "missing.mirror")


def test_without_hardening(params):
    flat = params.without_hardening()
    assert flat.stiffness(0.5) == params.stiffness(0.0)
    assert flat.linear_frequency() == params.linear_frequency()


@given(angles)
def test_restoring_and_comb_are_odd(params, th):
    assert restoring_torque(params, -th) == -restoring_torque(params, th)
    assert comb_torque(params, -th, 100.0) == -comb_torque(params, th, 100.0)


@given(angles, rates)
def test_damping_is_odd_in_rate_and_dissipative(params, th, om):
    d = damping_torque(params, th, om)
    assert damping_torque(params, th, -om) == -d
    assert d * om >= 0.0


@given(angles, rates, st.floats(0.0, 150.0), st.floats(0.0, 1.0), st.sampled_from(["ty", "tz"]))
def test_rhs_defining_identity(params, th, om, volt, t, axis):
    prof = VibrationProfile(axis, 27.7, 2100.0, 0.3)
    _, acc = equation_rhs(params, SimState(t, th, om), volt, prof)
    total = (comb_torque(params, th, volt) + vibration_torque(params, th, t, prof)
             - damping_torque(params, th, om) - restoring_torque(params, th))
    assert params.inertia * acc - total == pytest.approx(0.0, abs=1e-12 * max(1e-12, abs(total)))
