import numpy as np
import pytest
from hypothesis import settings

from mirrorvib import experiments as ex
from mirrorvib.engine import IntegratorConfig
from mirrorvib.model import default_params

settings.register_profile("mirrorvib", deadline=None, max_examples=60)
settings.load_profile("mirrorvib")

RK4 = IntegratorConfig(method="rk4")


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def ty_grid():
    near = np.round(np.arange(0.95, 1.0501, 0.0025), 6)
    lock = np.array([0.999, 0.9995, 1.0005, 1.001])
    return np.unique(np.r_[0.5, near, lock, 1.5])


@pytest.fixture(scope="session")
def ty_open(params, ty_grid):
    """Open-loop Ty sweep on a coarse grid, shared by several test modules."""
    return ex.run_frequency_sweep(ex.SweepSpec("ty", grid=ty_grid), params, RK4)


@pytest.fixture(scope="session")
def ty_pll(params, ty_grid):
    return ex.run_frequency_sweep(ex.SweepSpec("ty", "pll", grid=ty_grid), params, RK4)


@pytest.fixture(scope="session")
def tz_open(params):
    near = np.round(np.arange(1.95, 2.0501, 0.0025), 6)
    return ex.run_frequency_sweep(ex.SweepSpec("tz", grid=np.r_[0.5, 1.5, near]), params, RK4)
