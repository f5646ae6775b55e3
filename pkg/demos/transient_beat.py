"""Switch a 2 g_rms tone on at the settled operating point and read off the beat.

Run with ``python3 demos/transient_beat.py [f_norm]``.
"""
import sys

from mirrorvib import experiments as ex
from mirrorvib.engine import IntegratorConfig
from mirrorvib.model import load_params


def main(f_norm=1.0327):
    params = load_params()
    rep = ex.run_transient(params, f_norm, config=IntegratorConfig(method="rk4"),
                           store_samples=False)
    print(f"tone at {f_norm} f_m: beat {rep.beat_frequency:.5f} f_m "
          f"(expected {abs(f_norm - 1):.5f}, bin {rep.spectral_bin:.5f})")
    print(f"amplitude STD before {rep.before.std_amplitude_pct:.2e} %, "
          f"after {rep.after.std_amplitude_pct:.3f} %")


if __name__ == "__main__":
    main(*(float(x) for x in sys.argv[1:2]))
