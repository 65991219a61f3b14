"""Trajectory simulation, projection onto GK manifolds and experiment harnesses."""

from .trajectory import SimulationConfig, run_trajectory, run_ensemble
from .mor import project, run_projected_trajectory
from .mrfm import MrfmConfig, run_mrfm
from .spin_dust import build_dust, run_dust_experiment

__all__ = [
    "SimulationConfig",
    "run_trajectory",
    "run_ensemble",
    "project",
    "run_projected_trajectory",
    "MrfmConfig",
    "run_mrfm",
    "build_dust",
    "run_dust_experiment",
]
