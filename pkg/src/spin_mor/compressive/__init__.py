"""Sampling dictionaries and sparse recovery."""

from .dictionary import SamplingDictionary, build_dictionary, gaussian_dictionary
from .recovery import rip_report, sparse_select, sparse_project, sampling_bound

__all__ = [
    "SamplingDictionary",
    "build_dictionary",
    "gaussian_dictionary",
    "rip_report",
    "sparse_select",
    "sparse_project",
    "sampling_bound",
]
