"""Start the PLL 1 % off the locked period and watch the phase error settle.

Run with ``python3 demos/pll_demo.py``.
"""
from mirrorvib import experiments as ex
from mirrorvib.control import PllGains, run_pll_loop
from mirrorvib.engine import IntegratorConfig
from mirrorvib.model import VibrationProfile, load_params


def main(cycles=600):
    params = load_params()
    cfg = IntegratorConfig(method="rk4", store_samples=False)
    ck = ex.operating_point(params, cfg)
    f_m = 0.5 / ck.period
    _, hist = run_pll_loop(params, None, VibrationProfile.none(), PllGains(),
                           (ck.t, ck.t + cycles / f_m), cfg, checkpoint=ck,
                           start_period=1.01 * ck.period)
    # history columns: crossing time, T_m, t_beta, e, T_pll used, T_pll next
    for i in range(0, len(hist), max(1, len(hist) // 12)):
        print(f"update {i:4d}  T_pll/T_0={hist[i, 5] / ck.period:.6f}  "
              f"e={hist[i, 3] * 1e9:+10.3f} ns")


if __name__ == "__main__":
    main()
