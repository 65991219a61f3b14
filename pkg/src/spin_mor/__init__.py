"""
Spin MOR

Quantum trajectory simulation of measured spin systems with model order
reduction onto gabion-Kahler (GK) manifolds of low-rank product-sum states.
"""

__version__ = "0.1.0"

from .core.spin_algebra import make_spin_ops
from .core.measurement import make_pair
from .core.gk_manifold import GKState, random_gk_state
from .processing.trajectory import SimulationConfig, run_trajectory, run_ensemble
from .processing.mor import project
from .theory.geometry import curvature

__all__ = [
    "__version__",
    "make_spin_ops",
    "make_pair",
    "GKState",
    "random_gk_state",
    "SimulationConfig",
    "run_trajectory",
    "run_ensemble",
    "project",
    "curvature",
]
