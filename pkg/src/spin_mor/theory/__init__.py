"""Curvature of GK manifolds, thermal spinometers and calibration recipes."""

from .geometry import CurvatureReport, curvature, analytic_curvature
from .thermal import ThermalSpec, thermal_density, thermal_pairs
from .calibration import calibrate_bloch, calibrate_test_mass, calibrate_observation

__all__ = [
    "CurvatureReport",
    "curvature",
    "analytic_curvature",
    "ThermalSpec",
    "thermal_density",
    "thermal_pairs",
    "calibrate_bloch",
    "calibrate_test_mass",
    "calibrate_observation",
]
