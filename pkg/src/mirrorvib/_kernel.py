"""Compiled integration loop.

Everything that runs per time step lives here so that a full vibration sweep
stays within minutes. The public wrappers in :mod:`mirrorvib.engine` and
:mod:`mirrorvib.control` assemble the flat argument lists.
"""
import math

import numba
import numpy as np

from .curves import ppoly_eval

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_STEP_UNDERFLOW = 2
STATUS_DOMAIN = 3
STATUS_LOCK_LOST = 4

METHOD_RK4 = 0
METHOD_RK45 = 1

# drive/PLL state vector layout (mutated in place by the kernel)
DS_PERIOD_START = 0   # rising edge of the actuation period in progress
DS_PERIOD_LEN = 1     # length of that period
DS_T_CMD = 2          # PLL period commanded for the next period
DS_ACCUM = 3          # integral accumulator (sum of phase errors)
DS_LAST_CROSS = 4     # time of the previous zero crossing (nan if none)
DS_LAST_ERR = 5       # previous phase error
DS_PEAK = 6           # max |theta| since the previous crossing
DS_INDEX = 7          # number of PLL updates performed
DS_SIZE = 8

# PLL parameter vector layout
PP_KP = 0
PP_KI = 1
PP_REF = 2
PP_TMIN = 3
PP_TMAX = 4
PP_SIZE = 5

HIST_COLS = 6  # crossing time, T_m, t_beta, error, T_pll used, T_pll next


@numba.njit(cache=True)
def pll_step(t_pll, t_m, err, accum, kp, ki, t_min, t_max):
    """Incremental PI law with clamp and conditional integration.

    Returns the next PLL period and the updated accumulator.
    """
    t_new = t_pll + kp * (t_m - t_pll) + ki * err
    if t_new > t_max:
        return t_max, accum
    if t_new < t_min:
        return t_min, accum
    return t_new, accum + err


@numba.njit(cache=True)
def hermite(y0, m0, y1, m1, h, s):
    s2 = s * s
    s3 = s2 * s
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * m1)


@numba.njit(cache=True)
def hermite_slope(y0, m0, y1, m1, h, s):
    s2 = s * s
    return ((6.0 * s2 - 6.0 * s) * y0 / h + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1 / h + (3.0 * s2 - 2.0 * s) * m1)


@numba.njit(cache=True)
def hermite_root(y0, m0, y1, m1, h):
    """Root in s in [0, 1] of the cubic Hermite interpolant, given a bracket.

    Safeguarded Newton; the bracket always shrinks.
    """
    if y0 == 0.0:
        return 0.0
    if y1 == 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    flo = y0
    s = y0 / (y0 - y1)
    for _ in range(100):
        f = hermite(y0, m0, y1, m1, h, s)
        if f == 0.0:
            return s
        if (f > 0.0) == (flo > 0.0):
            lo = s
            flo = f
        else:
            hi = s
        if hi - lo <= 4e-16:
            break
        d = hermite_slope(y0, m0, y1, m1, h, s) * h
        s_new = s - f / d if d != 0.0 else -1.0
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= 1e-16:
            s = s_new
            break
        s = s_new
    return s


@numba.njit(cache=True)
def _vib_torque(t, th, ml, a, fv, phi, t_on, wy, wz, acc_t, acc_y, acc_z):
    if t < t_on:
        return 0.0
    if acc_t.shape[0] > 0:
        if t <= acc_t[0] or t >= acc_t[-1]:
            return 0.0
        j = np.searchsorted(acc_t, t, side="right") - 1
        r = (t - acc_t[j]) / (acc_t[j + 1] - acc_t[j])
        dy = acc_y[j] + r * (acc_y[j + 1] - acc_y[j])
        dz = acc_z[j] + r * (acc_z[j + 1] - acc_z[j])
        return ml * (dy * math.cos(th) + dz * math.sin(th))
    if a == 0.0:
        return 0.0
    d = a * math.cos(2.0 * math.pi * fv * t + phi)
    return ml * d * (wy * math.cos(th) + wz * math.sin(th))


@numba.njit(cache=True)
def _accel(t, th, om, volt, cv, inertia, ml, vib):
    # cv: tuple of curve arrays; vib: tuple of vibration arguments
    kx, kc, kp, bx, bc, bp, ax, ac, ap, gx, gc, gp, amp_on = cv
    k = ppoly_eval(kx, kc, kp, th)
    c = ppoly_eval(bx, bc, bp, th)
    if amp_on:
        c += ppoly_eval(ax, ac, ap, th) * abs(om)
    tq = -k * th - c * om
    if volt != 0.0:
        tq += 0.5 * ppoly_eval(gx, gc, gp, th) * volt * volt
    a, fv, phi, t_on, wy, wz, acc_t, acc_y, acc_z = vib
    tq += _vib_torque(t, th, ml, a, fv, phi, t_on, wy, wz, acc_t, acc_y, acc_z)
    return tq / inertia


@numba.njit(cache=True)
def _grow(arr, n_min):
    n = arr.shape[0]
    if n_min <= n:
        return arr
    new_n = max(2 * n, n_min, 16)
    out = np.empty((new_n,) + arr.shape[1:], dtype=arr.dtype)
    out[:n] = arr
    return out


@numba.njit(cache=True)
def _period_length(ds, mode_pll, t_start, ramp):
    if mode_pll:
        return ds[DS_T_CMD]
    rt0, rt1, rf0, rf1 = ramp
    if t_start <= rt0 or rt1 <= rt0:
        f = rf0
    elif t_start >= rt1:
        f = rf1
    else:
        f = rf0 + (rf1 - rf0) * (t_start - rt0) / (rt1 - rt0)
    return 1.0 / f


@numba.njit(cache=True)
def integrate_kernel(cv, inertia, ml, theta_lim, vib,
                     hv, duty, mode_pll, ramp, pp, ds,
                     method, dt, rtol, atol, max_step,
                     t0, t1, theta0, omega0, out_rate, lock_floor):
    """Integrate the mirror ODE from ``t0`` to ``t1``.

    ``ds`` is updated in place so a later call can resume the drive and PLL
    exactly where this one stopped.
    """
    n_out = int(math.floor((t1 - t0) * out_rate + 1e-9)) + 1
    s_th = np.empty(n_out)
    s_om = np.empty(n_out)
    s_v = np.empty(n_out)
    k_out = 0
    cross = np.empty((64, 2))
    n_cross = 0
    ext = np.empty((64, 2))
    n_ext = 0
    hist = np.empty((64, HIST_COLS))
    n_hist = 0
    edges = np.empty((64, 2))
    n_edges = 0

    status = STATUS_OK
    t = t0
    th = theta0
    om = omega0
    kp_gain = pp[PP_KP]
    ki_gain = pp[PP_KI]
    ref = pp[PP_REF]

    ps = ds[DS_PERIOD_START]
    pl = ds[DS_PERIOD_LEN]
    if t - ps >= pl:
        # caller handed over a finished period; advance the schedule
        while t - ps >= pl:
            ps += pl
            pl = _period_length(ds, mode_pll, ps, ramp)
            edges = _grow(edges, n_edges + 1)
            edges[n_edges, 0] = ps
            edges[n_edges, 1] = pl
            n_edges += 1
    on = (t - ps) < duty * pl
    seg_end = ps + duty * pl if on else ps + pl

    h = dt if method == METHOD_RK4 else min(max_step, 1e-3 * pl)
    volt = hv if on else 0.0
    acc = _accel(t, th, om, volt, cv, inertia, ml, vib)
    last_cross_t = ds[DS_LAST_CROSS]
    peak = ds[DS_PEAK]

    while t < t1 and status == STATUS_OK:
        volt = hv if on else 0.0
        t_stop = seg_end if seg_end < t1 else t1
        # the voltage just changed (or this is the first segment)
        acc = _accel(t, th, om, volt, cv, inertia, ml, vib)
        n_sub = 1
        if method == METHOD_RK4:
            n_sub = max(1, int(math.ceil((t_stop - t) / dt - 1e-9)))
            h = (t_stop - t) / n_sub
        j = 0
        while t < t_stop and status == STATUS_OK:
            # ---- one step ------------------------------------------------
            if method == METHOD_RK4:
                hh = h
                if j == n_sub - 1:
                    hh = t_stop - t
                k1o = om
                k1a = acc
                k2o = om + 0.5 * hh * k1a
                k2a = _accel(t + 0.5 * hh, th + 0.5 * hh * k1o, k2o, volt, cv, inertia, ml, vib)
                k3o = om + 0.5 * hh * k2a
                k3a = _accel(t + 0.5 * hh, th + 0.5 * hh * k2o, k3o, volt, cv, inertia, ml, vib)
                k4o = om + hh * k3a
                k4a = _accel(t + hh, th + hh * k3o, k4o, volt, cv, inertia, ml, vib)
                th_n = th + hh * (k1o + 2.0 * k2o + 2.0 * k3o + k4o) / 6.0
                om_n = om + hh * (k1a + 2.0 * k2a + 2.0 * k3a + k4a) / 6.0
                t_n = t + hh if j < n_sub - 1 else t_stop
                j += 1
            else:
                accepted = False
                while not accepted:
                    hh = min(h, max_step, t_stop - t)
                    if hh < 1e-14 * max(abs(t), 1e-6):
                        status = STATUS_STEP_UNDERFLOW
                        break
                    # Dormand-Prince 5(4)
                    k1o = om
                    k1a = acc
                    y2t = th + hh * (0.2 * k1o)
                    k2o = om + hh * (0.2 * k1a)
                    k2a = _accel(t + 0.2 * hh, y2t, k2o, volt, cv, inertia, ml, vib)
                    y3t = th + hh * (3.0 / 40.0 * k1o + 9.0 / 40.0 * k2o)
                    k3o = om + hh * (3.0 / 40.0 * k1a + 9.0 / 40.0 * k2a)
                    k3a = _accel(t + 0.3 * hh, y3t, k3o, volt, cv, inertia, ml, vib)
                    y4t = th + hh * (44.0 / 45.0 * k1o - 56.0 / 15.0 * k2o + 32.0 / 9.0 * k3o)
                    k4o = om + hh * (44.0 / 45.0 * k1a - 56.0 / 15.0 * k2a + 32.0 / 9.0 * k3a)
                    k4a = _accel(t + 0.8 * hh, y4t, k4o, volt, cv, inertia, ml, vib)
                    y5t = th + hh * (19372.0 / 6561.0 * k1o - 25360.0 / 2187.0 * k2o
                                     + 64448.0 / 6561.0 * k3o - 212.0 / 729.0 * k4o)
                    k5o = om + hh * (19372.0 / 6561.0 * k1a - 25360.0 / 2187.0 * k2a
                                     + 64448.0 / 6561.0 * k3a - 212.0 / 729.0 * k4a)
                    k5a = _accel(t + 8.0 / 9.0 * hh, y5t, k5o, volt, cv, inertia, ml, vib)
                    y6t = th + hh * (9017.0 / 3168.0 * k1o - 355.0 / 33.0 * k2o
                                     + 46732.0 / 5247.0 * k3o + 49.0 / 176.0 * k4o
                                     - 5103.0 / 18656.0 * k5o)
                    k6o = om + hh * (9017.0 / 3168.0 * k1a - 355.0 / 33.0 * k2a
                                     + 46732.0 / 5247.0 * k3a + 49.0 / 176.0 * k4a
                                     - 5103.0 / 18656.0 * k5a)
                    k6a = _accel(t + hh, y6t, k6o, volt, cv, inertia, ml, vib)
                    th_n = th + hh * (35.0 / 384.0 * k1o + 500.0 / 1113.0 * k3o
                                      + 125.0 / 192.0 * k4o - 2187.0 / 6784.0 * k5o
                                      + 11.0 / 84.0 * k6o)
                    om_n = om + hh * (35.0 / 384.0 * k1a + 500.0 / 1113.0 * k3a
                                      + 125.0 / 192.0 * k4a - 2187.0 / 6784.0 * k5a
                                      + 11.0 / 84.0 * k6a)
                    t_n = t + hh if hh < t_stop - t else t_stop
                    k7a = _accel(t_n, th_n, om_n, volt, cv, inertia, ml, vib)
                    e1 = 71.0 / 57600.0
                    e3 = -71.0 / 16695.0
                    e4 = 71.0 / 1920.0
                    e5 = -17253.0 / 339200.0
                    e6 = 22.0 / 525.0
                    e7 = -1.0 / 40.0
                    err_th = hh * (e1 * k1o + e3 * k3o + e4 * k4o + e5 * k5o
                                   + e6 * k6o + e7 * om_n)
                    err_om = hh * (e1 * k1a + e3 * k3a + e4 * k4a + e5 * k5a
                                   + e6 * k6a + e7 * k7a)
                    sc_th = atol + rtol * max(abs(th), abs(th_n))
                    # omega is scaled by the natural rate so both components
                    # share the same tolerance meaning
                    w_sc = 2.0 * math.pi / pl * 0.5
                    sc_om = (atol + rtol * max(abs(om), abs(om_n)) / w_sc) * w_sc
                    err = math.sqrt(0.5 * ((err_th / sc_th) ** 2 + (err_om / sc_om) ** 2))
                    if not math.isfinite(err):
                        h = 0.25 * hh
                        continue
                    if err <= 1.0:
                        accepted = True
                        fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
                        h = hh * fac
                    else:
                        h = hh * max(0.2, 0.9 * err ** -0.2)
                if status != STATUS_OK:
                    break
            if not (math.isfinite(th_n) and math.isfinite(om_n)):
                status = STATUS_DIVERGED
                break
            if abs(th_n) > theta_lim:
                status = STATUS_DOMAIN
                break
            if method == METHOD_RK4:
                acc_n = _accel(t_n, th_n, om_n, volt, cv, inertia, ml, vib)
            else:
                acc_n = k7a
            hs = t_n - t

            # ---- output samples in [t, t_n) (and t1 itself at the very end)
            while k_out < n_out:
                ts = t0 + k_out / out_rate
                if ts < t_n or (t_n >= t1 and ts <= t1 + 1e-12 * abs(t1)):
                    s = (ts - t) / hs if hs > 0.0 else 0.0
                    if s < 0.0:
                        s = 0.0
                    elif s > 1.0:
                        s = 1.0
                    s_th[k_out] = hermite(th, om, th_n, om_n, hs, s)
                    s_om[k_out] = hermite(om, acc, om_n, acc_n, hs, s)
                    s_v[k_out] = volt
                    k_out += 1
                else:
                    break

            # ---- extrema of theta (omega sign change) ------------------------
            if (om > 0.0) != (om_n > 0.0):
                s = hermite_root(om, acc, om_n, acc_n, hs)
                ext = _grow(ext, n_ext + 1)
                ext[n_ext, 0] = t + s * hs
                ext[n_ext, 1] = hermite(th, om, th_n, om_n, hs, s)
                n_ext += 1
                if abs(ext[n_ext - 1, 1]) > peak:
                    peak = abs(ext[n_ext - 1, 1])
            if abs(th_n) > peak:
                peak = abs(th_n)

            # ---- zero crossings of theta ---------------------------------------
            if (th > 0.0) != (th_n > 0.0):
                s = hermite_root(th, om, th_n, om_n, hs)
                tc = t + s * hs
                cross = _grow(cross, n_cross + 1)
                cross[n_cross, 0] = tc
                cross[n_cross, 1] = 1.0 if th_n > 0.0 else -1.0
                n_cross += 1
                if not math.isnan(last_cross_t):
                    t_m = tc - last_cross_t
                    t_beta = (ps + pl) - tc
                    err_ph = ref - t_beta
                    t_used = ds[DS_T_CMD]
                    if mode_pll:
                        t_next, acc_new = pll_step(t_used, t_m, err_ph, ds[DS_ACCUM],
                                                   kp_gain, ki_gain, pp[PP_TMIN], pp[PP_TMAX])
                        ds[DS_T_CMD] = t_next
                        ds[DS_ACCUM] = acc_new
                    else:
                        t_next = _period_length(ds, mode_pll, ps + pl, ramp)
                        ds[DS_T_CMD] = t_next
                    ds[DS_LAST_ERR] = err_ph
                    ds[DS_INDEX] += 1.0
                    hist = _grow(hist, n_hist + 1)
                    hist[n_hist, 0] = tc
                    hist[n_hist, 1] = t_m
                    hist[n_hist, 2] = t_beta
                    hist[n_hist, 3] = err_ph
                    hist[n_hist, 4] = t_used
                    hist[n_hist, 5] = t_next
                    n_hist += 1
                    if mode_pll and peak < lock_floor:
                        status = STATUS_LOCK_LOST
                last_cross_t = tc
                peak = 0.0

            t = t_n
            th = th_n
            om = om_n
            acc = acc_n

        if status != STATUS_OK:
            break
        if mode_pll and not math.isnan(last_cross_t) and t - last_cross_t > 8.0 * pp[PP_TMAX]:
            status = STATUS_LOCK_LOST
            break
        # ---- drive edge --------------------------------------------------------
        if t >= seg_end:
            if on:
                on = False
                seg_end = ps + pl
            else:
                ps = ps + pl
                pl = _period_length(ds, mode_pll, ps, ramp)
                on = True
                seg_end = ps + duty * pl
                edges = _grow(edges, n_edges + 1)
                edges[n_edges, 0] = ps
                edges[n_edges, 1] = pl
                n_edges += 1

    ds[DS_PERIOD_START] = ps
    ds[DS_PERIOD_LEN] = pl
    ds[DS_LAST_CROSS] = last_cross_t
    ds[DS_PEAK] = peak
    return (status, t, th, om, k_out, s_th, s_om, s_v,
            cross[:n_cross].copy(), ext[:n_ext].copy(), hist[:n_hist].copy(),
            edges[:n_edges].copy())
