"""
Numerical validation helpers and error types.

This module provides the shared checks used across the package: Hermiticity,
unitarity and unit directions, plus the trace distance between
density matrices and the error types raised by solvers and samplers.
"""

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine fails to converge and strictness was requested."""


class BrokenPairError(ValueError):
    """Raised when a measurement pair yields a branch probability outside [0, 1]."""


def is_hermitian(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    """
    Check whether a square matrix is Hermitian.

    Args:
        matrix: Square complex matrix
        tol: Absolute entrywise tolerance

    Returns:
        True if ``max|M - M^dagger| <= tol``

    Example:
        >>> is_hermitian(np.array([[1, 1j], [-1j, 2]]))
        True
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= tol)


def unitarity_defect(matrix: np.ndarray) -> float:
    """
    Frobenius norm of ``U^dagger U - I``.

    Args:
        matrix: Square complex matrix

    Returns:
        Defect norm (0 for an exactly unitary matrix)
    """
    matrix = np.asarray(matrix)
    eye = np.eye(matrix.shape[0])
    return float(np.linalg.norm(matrix.conj().T @ matrix - eye))


def hermitize(matrix: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(M + M^dagger)/2``."""
    return 0.5 * (matrix + matrix.conj().T)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """
    Trace distance ``0.5 * ||rho - sigma||_1`` between two density matrices.

    Example:
        >>> trace_distance(np.diag([1, 0]), np.diag([0, 1]))
        1.0
    """
    eigs = np.linalg.eigvalsh(hermitize(np.asarray(rho) - np.asarray(sigma)))
    return float(0.5 * np.sum(np.abs(eigs)))


def check_unit_vector(vector, name: str = "direction", tol: float = 1e-9) -> np.ndarray:
    """
    Validate a real 3-vector of unit length.

    Raises:
        ValueError: If the vector is not length 3, not finite, or not unit norm
    """
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (3,) or not np.all(np.isfinite(vector)):
        raise ValueError(f"{name} must be a finite real 3-vector, got {vector!r}")

    norm = np.linalg.norm(vector)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must be a unit vector, got norm {norm:.12g}")

    return vector


