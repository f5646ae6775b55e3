"""Up and down drive-frequency sweeps showing the jumps and the hysteresis region.

Run with ``python3 demos/response_curves.py``.
"""
from mirrorvib import experiments as ex
from mirrorvib.engine import IntegratorConfig
from mirrorvib.model import load_params


def main():
    params = load_params()
    cfg = IntegratorConfig(method="rk4")
    grid = ex.response_grid(0.96, 1.12, 0.005)
    up = ex.run_response_curve(params, "up", grid, config=cfg)
    down = ex.run_response_curve(params, "down", grid, config=cfg)
    for curve in (up, down):
        for f0, f1, a0, a1 in curve.jumps:
            print(f"{curve.direction:>4}: jump {f0:.4f} -> {f1:.4f}, amplitude {a0:.3f} -> {a1:.3f} theta_ref")
    hyst = ex.hysteresis_points(up, down)
    if len(hyst):
        print(f"two stable amplitudes between {hyst.min():.4f} and {hyst.max():.4f} f_ref")


if __name__ == "__main__":
    main()
