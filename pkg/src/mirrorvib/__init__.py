"""Simulation of a parametrically driven MEMS scanning mirror under translational vibration."""
from .analysis import (EnergyCoeffs, ErrorStats, analytic_energy_series, coupling_coeffs,
                       error_stats, numeric_energy_series)
from .control import DriveSource, PllGains, PllState, drive_voltage, phase_error, pll_update, run_pll_loop
from .curves import CurveDomainError, NonlinearCurve
from .engine import (CyclePeriods, IntegratorConfig, Trace, detect_crossings, integrate,
                     measure_cycles, settle)
from .experiments import (SweepResult, SweepSpec, run_frequency_sweep, run_misalignment_check,
                          run_response_curve, run_transient)
from .model import (MirrorParams, SimState, VibrationProfile, default_params, equation_rhs,
                    load_params, save_params)

__version__ = "0.1.0"
