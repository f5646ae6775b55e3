"""Per-period vibration energy: quadrature of the torque against the averaged closed form.

Run with ``python3 demos/energy_check.py``.
"""
from mirrorvib import experiments as ex
from mirrorvib.model import load_params


def main():
    params = load_params()
    for axis, f_norm in (("ty", 1.03), ("tz", 2.03), ("ty", 0.99)):
        chk = ex.run_energy_check(params, axis, f_norm)
        print(f"{axis} f/f_m={f_norm:.3f}  beat={chk.beat:+.3f}  "
              f"amplitude ratio={chk.amp_ratio:.4f}  lag={chk.lag_periods:+.2f} periods")


if __name__ == "__main__":
    main()
