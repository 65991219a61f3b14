"""Spin operators, measurement pairs and the GK state manifold."""

from .spin_algebra import SpinRep, make_spin_ops, coherent_state
from .measurement import MeasurementPair, make_pair
from .gk_manifold import GKState, evaluate, tangent_frame, random_gk_state

__all__ = [
    "SpinRep",
    "make_spin_ops",
    "coherent_state",
    "MeasurementPair",
    "make_pair",
    "GKState",
    "evaluate",
    "tangent_frame",
    "random_gk_state",
]
