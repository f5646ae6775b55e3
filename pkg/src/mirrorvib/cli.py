"""Command line front end: ``mirrorvib <subcommand> [options]``.

Every subcommand writes CSV files plus a JSON summary into ``--out``.
Exit codes: 0 success, 2 usage error, 3 the simulation diverged (a
diagnostics file with the partial trace is written first).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .analysis import write_energy_csv
from .control import DriveSource, PllGains, run_pll_loop, write_pll_history_csv
from .engine import DivergenceError, IntegratorConfig, integrate, measure_cycles
from .model import VibrationProfile, g_rms_to_peak, load_params

log = logging.getLogger("mirrorvib")

_CONTROL = {"open": "open_loop", "open_loop": "open_loop", "pll": "pll"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", help="mirror parameter file (default: shipped set)")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--method", choices=("rk45", "rk4"), default="rk45")
    p.add_argument("-v", "--verbose", action="store_true")


def _vib(p: argparse.ArgumentParser, fnorm: float) -> None:
    p.add_argument("--axis", choices=("ty", "tz"), default="ty")
    p.add_argument("--fnorm", type=float, default=fnorm,
                   help="tone frequency over the mirror frequency")
    p.add_argument("--grms", type=float, default=2.0, help="tone level in g_rms")


def _gains(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kp", type=float, default=0.3)
    p.add_argument("--ki", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mirrorvib",
                                 description="Scanning-mirror vibration simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("respcurve", help="stepped drive-frequency sweep (up/down)")
    _common(p)
    p.add_argument("--direction", choices=("up", "down", "both"), default="both")
    p.add_argument("--fmin", type=float, default=0.94)
    p.add_argument("--fmax", type=float, default=1.12)
    p.add_argument("--step", type=float, default=0.0025)
    p.add_argument("--hardening-off", action="store_true",
                   help="replace the stiffness by its small-angle value")

    p = sub.add_parser("transient", help="tone switched on at the operating point")
    _common(p)
    _vib(p, 1.0327)
    _gains(p)
    p.add_argument("--control", choices=tuple(_CONTROL), default="open")
    p.add_argument("--misalignment-deg", type=float, default=0.0)

    p = sub.add_parser("sweep", help="vibration frequency sweep with STD statistics")
    _common(p)
    _gains(p)
    p.add_argument("--axis", choices=("ty", "tz"), default="ty")
    p.add_argument("--control", choices=tuple(_CONTROL), default="open")
    p.add_argument("--grms", type=float, default=2.0)
    p.add_argument("--fmin", type=float, default=0.42)
    p.add_argument("--fmax", type=float, default=2.09)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--fine", type=float, default=0.0005)
    p.add_argument("--misalignment-deg", type=float, default=0.0)
    p.add_argument("--max-cycles", type=int, default=20000)

    p = sub.add_parser("energy", help="per-period energy: quadrature vs closed form")
    _common(p)
    _vib(p, 1.03)
    p.add_argument("--theta", type=float, default=0.2, help="imposed amplitude [rad]")
    p.add_argument("--simulated", action="store_true",
                   help="use a simulated run at the operating point instead")

    p = sub.add_parser("plldemo", help="PLL-controlled mirror, optionally with a tone")
    _common(p)
    _vib(p, 1.0)
    _gains(p)
    p.add_argument("--cycles", type=int, default=2000)
    p.add_argument("--no-tone", action="store_true")
    p.add_argument("--period-offset", type=float, default=0.0,
                   help="relative error of the first PLL period")
    return ap


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, default=float))


def _cmd_respcurve(a, params, cfg, out: Path) -> dict:
    if a.hardening_off:
        params = params.without_hardening()
    grid = ex.response_grid(a.fmin, a.fmax, a.step)
    dirs = ("up", "down") if a.direction == "both" else (a.direction,)
    curves = {d: ex.run_response_curve(params, d, grid, config=cfg) for d in dirs}
    jumps = []
    for d, c in curves.items():
        c.write_csv(out / f"respcurve_{d}.csv")
        jumps += [(d,) + j for j in c.jumps]
    with open(out / "respcurve_jumps.csv", "w") as fh:
        fh.write("# mirrorvib jumps v1\ndirection,f_from,f_to,amp_from,amp_to\n")
        for j in jumps:
            fh.write("{},{:.6f},{:.6f},{:.9g},{:.9g}\n".format(*j))
    summary = {"format": "mirrorvib respcurve-summary v1", "jumps": jumps}
    if len(curves) == 2:
        summary["hysteresis_points"] = ex.hysteresis_points(curves["up"], curves["down"]).tolist()
    return summary


def _cmd_transient(a, params, cfg, out: Path) -> dict:
    rep = ex.run_transient(params, a.fnorm, a.axis, control=_CONTROL[a.control],
                           g_rms=a.grms, misalignment=math.radians(a.misalignment_deg),
                           gains=PllGains(a.kp, a.ki), config=cfg)
    rep.write(out, "transient")
    return {"beat_frequency": rep.beat_frequency, "spectral_bin": rep.spectral_bin,
            "amp_pp": rep.amp_pp, "freq_pp": rep.freq_pp}


def _cmd_sweep(a, params, cfg, out: Path) -> dict:
    grid = ex.default_grid(a.fmin, a.fmax, a.step, a.fine)
    spec = ex.SweepSpec(a.axis, _CONTROL[a.control], grid, a.grms,
                        math.radians(a.misalignment_deg), PllGains(a.kp, a.ki),
                        max_cycles=a.max_cycles)

    def progress(i, n, row):
        log.info("%d/%d f=%.4f %s std_a=%s", i + 1, n, row["f_norm"], row["status"],
                 row.get("std_amplitude_pct"))

    res = ex.run_frequency_sweep(spec, params, cfg, progress=progress)
    res.write(out, f"sweep_{spec.axis}_{spec.control}")
    return {"points": len(res.rows), "features": res.features()}


def _cmd_energy(a, params, cfg, out: Path) -> dict:
    if a.simulated:
        ck = ex.operating_point(params, cfg)
        f_m = 0.5 / ck.period
        band = 1 if a.axis == "ty" else 2
        beat = abs(a.fnorm - band)
        n = max(400, int(3.0 / beat)) if beat else 400
        prof = VibrationProfile(a.axis, g_rms_to_peak(a.grms), a.fnorm * f_m, 0.0, ck.t)
        drive = DriveSource.open_loop(1.0 / ck.period, params.hv_voltage, params.duty)
        tr = integrate(params, ck.state, drive, prof, (ck.t, ck.t + n / f_m),
                       IntegratorConfig(method=cfg.method), checkpoint=ck)
        theta = float(np.mean(measure_cycles(tr).amplitudes))
        chk = ex.run_energy_check(params, a.axis, a.fnorm, theta=theta, g_rms=a.grms,
                                  trace=tr, f_m=f_m)
    else:
        chk = ex.run_energy_check(params, a.axis, a.fnorm, theta=a.theta, g_rms=a.grms)
    write_energy_csv(out / "energy.csv", chk.times, chk.numeric, chk.analytic)
    return {"theta": chk.theta, "beat": chk.beat, "amp_ratio": chk.amp_ratio,
            "lag_periods": chk.lag_periods}


def _cmd_plldemo(a, params, cfg, out: Path) -> dict:
    ck = ex.operating_point(params, cfg)
    f_m = 0.5 / ck.period
    if a.no_tone:
        prof = VibrationProfile.none()
    else:
        prof = VibrationProfile(a.axis, g_rms_to_peak(a.grms), a.fnorm * f_m, 0.0, ck.t)
    start = ck.period * (1.0 + a.period_offset) if a.period_offset else None
    tr, hist = run_pll_loop(params, None, prof, PllGains(a.kp, a.ki),
                            (ck.t, ck.t + a.cycles / f_m), cfg, checkpoint=ck,
                            start_period=start)
    write_pll_history_csv(hist, out / "pll_history.csv")
    tr.write_csv(out / "pll")
    cy = measure_cycles(tr)
    half = cy.window(ck.t + 0.5 * a.cycles / f_m, np.inf)
    return {"t_beta_ref": ck.t_beta_ref, "final_error": float(hist[-1, 3]),
            "mean_frequency_hz": float(np.mean(half.frequencies)),
            "std_amplitude_pct": float(100 * half.amplitudes.std() / half.amplitudes.mean())}


_COMMANDS = {"respcurve": _cmd_respcurve, "transient": _cmd_transient, "sweep": _cmd_sweep,
             "energy": _cmd_energy, "plldemo": _cmd_plldemo}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        params = load_params(a.params)
    except (OSError, ValueError) as exc:
        print(f"mirrorvib: cannot read parameters: {exc}", file=sys.stderr)
        return 2
    cfg = IntegratorConfig(method=a.method)
    try:
        summary = _COMMANDS[a.command](a, params, cfg, out)
    except DivergenceError as exc:
        diag = out / "diverged"
        if exc.trace is not None and len(exc.trace.times):
            exc.trace.write_csv(diag)
            where = f"{diag}_trace.csv"
        else:
            where = str(out / "diverged.txt")
            Path(where).write_text(f"{exc}\n")
        print(f"mirrorvib: simulation diverged ({exc}); diagnostics in {where}",
              file=sys.stderr)
        return 3
    summary = {"command": a.command, "params": params.name, **summary}
    _write_json(out / f"{a.command}_summary.json", summary)
    print(json.dumps(summary, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(cli_main())
