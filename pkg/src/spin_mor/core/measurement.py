"""
Spinometer measurement-operator pairs and the operator-sum superoperator.

A measurement pair (M+, M-) is one stochastic branch point per time step.
This module builds the pairs in each tuning (ergodic, batrachian, synoptic,
closed-loop, raw), mixes pairs by 2x2 unitaries, reports the first-class
small parameter epsilon, and evolves density matrices by the pair channels.
Operators act on a multi-spin Hilbert space through lazy Kronecker
embedding at a spin index.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh

from .spin_algebra import SpinRep
from ..utils.validation import check_unit_vector, hermitize, is_hermitian, unitarity_defect

logger = logging.getLogger(__name__)

TUNINGS = ('ergodic', 'batrachian', 'synoptic', 'closed_loop', 'raw')


@dataclass(frozen=True, eq=False)
class MeasurementPair:
    """
    A (M+, M-) operator pair with its tuning metadata.

    Satisfies M+^dagger M+ + M-^dagger M- = I.
    """

    m_plus: np.ndarray
    m_minus: np.ndarray
    tuning: str
    theta: float
    alpha: float = 0.0
    axis: Union[int, Tuple[float, float, float]] = 3
    thermal_axis: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.m_plus.shape[0]

    def completeness_defect(self) -> float:
        """Frobenius norm of M+^dagger M+ + M-^dagger M- - I."""
        total = self.m_plus.conj().T @ self.m_plus + self.m_minus.conj().T @ self.m_minus
        return float(np.linalg.norm(total - np.eye(self.dim)))

    def operators(self) -> np.ndarray:
        """Stacked operators, shape (2, dim, dim), branch +1 first."""
        return np.stack([self.m_plus, self.m_minus])


@dataclass(frozen=True)
class EpsilonReport:
    """First-class decomposition M+ = c I + dM+, M- = s I + dM-."""

    epsilon: float
    c: complex
    s: complex


def hermitian_function(op: np.ndarray, func) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its eigen-decomposition."""
    w, v = eigh(hermitize(np.asarray(op, dtype=complex)))
    return (v * func(w)[None, :]) @ v.conj().T


def _axis_vector(axis) -> np.ndarray:
    if isinstance(axis, (int, np.integer)):
        if axis not in (1, 2, 3):
            raise ValueError(f"Axis must be 1, 2 or 3, got {axis}")
        return np.eye(3)[axis - 1]
    return check_unit_vector(axis, "axis")


def make_pair(
    rep: SpinRep,
    tuning: str,
    theta: float,
    axis=3,
    alpha: float = 0.0,
    thermal_axis=None,
) -> MeasurementPair:
    """
    Build a spinometer pair generated by the spin component along ``axis``.

    Tunings:
        - ergodic: (e^{i theta s}, e^{-i theta s}) / sqrt(2)
        - batrachian: (sin theta s, cos theta s)
        - synoptic: (cos theta s + sin theta s, cos theta s - sin theta s) / sqrt(2)
        - closed_loop: synoptic pair left-multiplied by e^{-/+ i alpha theta (t x s)_k}
        - raw: (e^{2 i theta s}, i I) / sqrt(2)

    Args:
        rep: Spin representation
        tuning: One of TUNINGS
        theta: Real coupling
        axis: Axis index 1..3 or unit 3-vector
        alpha: Feedback gain (closed_loop only)
        thermal_axis: Unit 3-vector t (closed_loop only, defaults to z)

    Returns:
        MeasurementPair

    Raises:
        ValueError: If tuning is unknown, theta/alpha not finite, or thermal_axis
            is not a unit vector

    Example:
        >>> rep = make_spin_ops(0.5)
        >>> pair = make_pair(rep, 'synoptic', 0.1, axis=3)
        >>> pair.completeness_defect() < 1e-12
        True
    """
    # Validate inputs
    if tuning not in TUNINGS:
        raise ValueError(f"Unknown tuning '{tuning}'. Available: {', '.join(TUNINGS)}")

    if not np.isfinite(theta) or not np.isfinite(alpha):
        raise ValueError(f"theta and alpha must be finite, got theta={theta}, alpha={alpha}")

    n = _axis_vector(axis)
    s = n[0] * rep.s1 + n[1] * rep.s2 + n[2] * rep.s3
    root2 = np.sqrt(2.0)
    t_hat = None

    if tuning == 'ergodic':
        m_plus = hermitian_function(s, lambda w: np.exp(1j * theta * w)) / root2
        m_minus = hermitian_function(s, lambda w: np.exp(-1j * theta * w)) / root2
    elif tuning == 'batrachian':
        m_plus = hermitian_function(s, lambda w: np.sin(theta * w))
        m_minus = hermitian_function(s, lambda w: np.cos(theta * w))
    elif tuning == 'raw':
        m_plus = hermitian_function(s, lambda w: np.exp(2j * theta * w)) / root2
        m_minus = 1j * np.eye(rep.dim) / root2
    else:
        m_plus = hermitian_function(s, lambda w: np.cos(theta * w) + np.sin(theta * w)) / root2
        m_minus = hermitian_function(s, lambda w: np.cos(theta * w) - np.sin(theta * w)) / root2

        if tuning == 'closed_loop':
            t_hat = check_unit_vector(
                thermal_axis if thermal_axis is not None else [0.0, 0.0, 1.0],
                "thermal_axis",
            )
            # (t x s)_k = (n x t) . s for measurement axis n
            w = np.cross(n, t_hat)
            feedback = w[0] * rep.s1 + w[1] * rep.s2 + w[2] * rep.s3
            m_plus = hermitian_function(feedback, lambda x: np.exp(-1j * alpha * theta * x)) @ m_plus
            m_minus = hermitian_function(feedback, lambda x: np.exp(1j * alpha * theta * x)) @ m_minus

    return MeasurementPair(
        m_plus=m_plus,
        m_minus=m_minus,
        tuning=tuning,
        theta=float(theta),
        alpha=float(alpha) if tuning == 'closed_loop' else 0.0,
        axis=axis if isinstance(axis, (int, np.integer)) else tuple(n),
        thermal_axis=t_hat,
    )


def u_mix(pair: MeasurementPair, U: np.ndarray) -> MeasurementPair:
    """
    Unitary mixing ``(M+', M-')^T = U (M+, M-)^T``.

    The superoperator and the epsilon parameter are invariant under this map.

    Raises:
        ValueError: If U is not a 2x2 unitary to 1e-10
    """
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2):
        raise ValueError(f"Mixing matrix must be 2x2, got shape {U.shape}")

    if unitarity_defect(U) > 1e-10:
        raise ValueError(f"Mixing matrix is not unitary (defect {unitarity_defect(U):.3e})")

    m_plus = U[0, 0] * pair.m_plus + U[0, 1] * pair.m_minus
    m_minus = U[1, 0] * pair.m_plus + U[1, 1] * pair.m_minus
    return MeasurementPair(
        m_plus=m_plus,
        m_minus=m_minus,
        tuning=pair.tuning,
        theta=pair.theta,
        alpha=pair.alpha,
        axis=pair.axis,
        thermal_axis=pair.thermal_axis,
    )


def theorema_chain() -> Dict[str, np.ndarray]:
    """
    Mixing unitaries relating the tunings.

    Returns:
        Dictionary with ``ergodic_to_synoptic`` and ``ergodic_to_batrachian``
    """
    root2 = np.sqrt(2.0)
    return {
        'ergodic_to_synoptic': np.exp(-1j * np.pi / 4) * np.array([[1, 1j], [1j, 1]]) / root2,
        'ergodic_to_batrachian': np.array([[-1j, 1j], [1, 1]]) / root2,
    }


def epsilon_param(pair: MeasurementPair) -> EpsilonReport:
    """
    First-class small parameter of a pair.

    ``c = tr M+ / dim``, ``s = tr M- / dim`` and
    ``eps^2 = tr(dM+^dagger dM+ + dM-^dagger dM-) / dim``.

    Example:
        >>> report = epsilon_param(make_pair(make_spin_ops(0.5), 'synoptic', 0.0))
        >>> report.epsilon
        0.0
    """
    dim = pair.dim
    eye = np.eye(dim)
    c = np.trace(pair.m_plus) / dim
    s = np.trace(pair.m_minus) / dim

    d_plus = pair.m_plus - c * eye
    d_minus = pair.m_minus - s * eye
    eps_sq = (np.vdot(d_plus, d_plus) + np.vdot(d_minus, d_minus)).real / dim
    return EpsilonReport(epsilon=float(np.sqrt(max(eps_sq, 0.0))), c=complex(c), s=complex(s))


# Lazy embedding ------------------------------------------------------------


def embed_operator(op: np.ndarray, site: int, dims: Sequence[int]) -> np.ndarray:
    """Dense Kronecker embedding of a local operator at ``site``."""
    dims = list(dims)
    if not 0 <= site < len(dims):
        raise ValueError(f"Site {site} out of range for {len(dims)} spins")
    if op.shape != (dims[site], dims[site]):
        raise ValueError(f"Operator shape {op.shape} does not match local dim {dims[site]}")

    left = int(np.prod(dims[:site], dtype=int))
    right = int(np.prod(dims[site + 1:], dtype=int))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def apply_local(
    op: np.ndarray,
    psi: np.ndarray,
    site: Optional[int] = None,
    dims: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Apply a local operator to state vectors without materializing the full matrix.

    Args:
        op: Local operator, or an operator on the whole space when site is None
        psi: State of shape (D,) or batch of shape (B, D)
        site: Spin index the operator acts on
        dims: Local dimensions of all spins

    Returns:
        Array of the same shape as psi
    """
    psi = np.asarray(psi)
    batch = np.atleast_2d(psi)

    if site is None or dims is None:
        out = batch @ np.asarray(op).T
    else:
        dims = list(dims)
        left = int(np.prod(dims[:site], dtype=int))
        right = int(np.prod(dims[site + 1:], dtype=int))
        tensor = batch.reshape(batch.shape[0], left, dims[site], right)
        out = np.einsum('ij,bljr->blir', op, tensor).reshape(batch.shape)

    return out[0] if psi.ndim == 1 else out


PlacedPair = Union[MeasurementPair, Tuple[int, MeasurementPair]]


def place_pairs(pairs: Sequence[PlacedPair]) -> List[Tuple[Optional[int], MeasurementPair]]:
    """Normalize pairs to (site, pair) tuples; a bare pair acts on the whole space (site None)."""
    placed = []
    for item in pairs:
        if isinstance(item, MeasurementPair):
            placed.append((None, item))
        else:
            site, pair = item
            placed.append((int(site), pair))
    return placed


def _sandwich(op, rho, site, dims) -> np.ndarray:
    """M rho M^dagger with M embedded at site."""
    left = apply_local(op, rho.T, site, dims).T
    return apply_local(op, left.conj(), site, dims).conj()


def _check_rho(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"Density matrix must be square, got shape {rho.shape}")
    if not is_hermitian(rho, 1e-10):
        raise ValueError("Density matrix is not Hermitian")
    return rho


def superoperator_apply(
    pairs: Sequence[PlacedPair],
    rho: np.ndarray,
    dims: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    One measurement sweep of the operator-sum superoperator.

    Each pair channel ``rho -> M+ rho M+^dagger + M- rho M-^dagger`` is
    applied in configuration order, matching one trajectory sweep. Trace is
    preserved exactly.

    Args:
        pairs: MeasurementPair items, or (site, pair) tuples with ``dims``
        rho: Density matrix
        dims: Local dimensions when pairs are placed at spin sites

    Returns:
        Evolved, re-Hermitized density matrix

    Raises:
        ValueError: If rho is not square Hermitian
    """
    rho = _check_rho(rho)
    for site, pair in place_pairs(pairs):
        rho = _sandwich(pair.m_plus, rho, site, dims) + _sandwich(pair.m_minus, rho, site, dims)
        rho = hermitize(rho)
    return rho


def superoperator_increment(
    pairs: Sequence[PlacedPair],
    rho: np.ndarray,
    dims: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Summed per-pair increment ``sum_k (M+ rho M+^dagger + M- rho M-^dagger - rho)``.

    Agrees with ``superoperator_apply(pairs, rho) - rho`` to first order in
    the pair increments.
    """
    rho = _check_rho(rho)
    total = np.zeros_like(rho)
    for site, pair in place_pairs(pairs):
        total += _sandwich(pair.m_plus, rho, site, dims) + _sandwich(pair.m_minus, rho, site, dims) - rho
    return hermitize(total)
