"""Open-loop versus PLL amplitude error across the first coupling band.

Run with ``python3 demos/ty_sweep.py``. Takes about a minute.
"""
import numpy as np

from mirrorvib import experiments as ex
from mirrorvib.engine import IntegratorConfig
from mirrorvib.model import load_params


def main():
    params = load_params()
    cfg = IntegratorConfig(method="rk4")
    grid = np.array([0.95, 0.9675, 0.99, 0.999, 1.0, 1.0005, 1.01, 1.02, 1.0325, 1.05])
    ol = ex.run_frequency_sweep(ex.SweepSpec("ty", "open_loop", grid), params, cfg)
    pll = ex.run_frequency_sweep(ex.SweepSpec("ty", "pll", grid), params, cfg)
    print(" f/f_m    open loop [%]   PLL [%]   locked")
    for f, a, b, lk in zip(grid, ol.std_amplitude, pll.std_amplitude, pll.locked()):
        print(f"{f:7.4f}  {a:12.4f}  {b:9.4f}   {'yes' if lk else 'no'}")


if __name__ == "__main__":
    main()
