"""
Spin-j operator algebra, rotation operators and coherent spin states.

Everything else in the package is built from the matrices produced here.
Basis index k labels the magnetic quantum number m = j - k, so s3 is the
real diagonal ``diag(j, j-1, ..., -j)``.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm
from scipy.special import comb

from ..utils.validation import check_unit_vector

logger = logging.getLogger(__name__)

MAX_SPIN = 200

SpinLike = Union[float, int, str, Fraction]


def parse_spin(j: SpinLike) -> float:
    """
    Convert a spin quantum number to float, checking that 2j is a nonnegative integer.

    Accepts numbers or strings such as ``"3/2"``.

    Raises:
        ValueError: If 2j is not a nonnegative integer or j exceeds MAX_SPIN

    Example:
        >>> parse_spin("3/2")
        1.5
    """
    try:
        value = float(Fraction(j)) if isinstance(j, str) else float(j)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValueError(f"Cannot interpret spin {j!r}") from exc

    twice = 2 * value
    if not np.isfinite(twice) or twice < 0 or abs(twice - round(twice)) > 1e-12:
        raise ValueError(f"Spin must be a nonnegative half-integer, got {j!r}")

    if value > MAX_SPIN:
        raise ValueError(f"Spin j={value} exceeds the dense-matrix cap {MAX_SPIN}")

    return round(twice) / 2


@dataclass(frozen=True, eq=False)
class SpinRep:
    """Irreducible spin-j representation: the operator triple (s1, s2, s3)."""

    j: float
    dim: int
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray

    @property
    def ops(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.s1, self.s2, self.s3)

    @property
    def s_plus(self) -> np.ndarray:
        """Raising operator s1 + i s2."""
        return self.s1 + 1j * self.s2

    @property
    def s_minus(self) -> np.ndarray:
        """Lowering operator s1 - i s2."""
        return self.s1 - 1j * self.s2

    @property
    def m_values(self) -> np.ndarray:
        return self.j - np.arange(self.dim)

    def along(self, direction) -> np.ndarray:
        """
        Spin component along a direction.

        Args:
            direction: Axis index 1..3 or a unit 3-vector

        Returns:
            The operator ``n . s``
        """
        if isinstance(direction, (int, np.integer)):
            if direction not in (1, 2, 3):
                raise ValueError(f"Axis must be 1, 2 or 3, got {direction}")
            return self.ops[direction - 1]

        n = check_unit_vector(direction)
        return n[0] * self.s1 + n[1] * self.s2 + n[2] * self.s3


@lru_cache(maxsize=64)
def _spin_matrices(j: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    dim = int(round(2 * j)) + 1
    m = j - np.arange(dim)

    # s+ raises m: nonzero on the superdiagonal in this ordering
    s_plus = np.zeros((dim, dim), dtype=complex)
    if dim > 1:
        mk = m[1:]
        s_plus[np.arange(dim - 1), np.arange(1, dim)] = np.sqrt(j * (j + 1) - mk * (mk + 1))
    s_minus = s_plus.conj().T

    s1 = 0.5 * (s_plus + s_minus)
    s2 = (s_plus - s_minus) / 2j
    s3 = np.diag(m).astype(complex)

    for op in (s1, s2, s3):
        op.flags.writeable = False
    return s1, s2, s3


def make_spin_ops(j: SpinLike) -> SpinRep:
    """
    Build the spin-j operator triple.

    Args:
        j: Nonnegative half-integer spin

    Returns:
        SpinRep with [s1, s2] = i s3 and cyclic permutations

    Raises:
        ValueError: If j is not a nonnegative half-integer

    Example:
        >>> rep = make_spin_ops(0.5)
        >>> rep.s3.real
        array([[ 0.5,  0. ],
               [ 0. , -0.5]])
    """
    j = parse_spin(j)
    s1, s2, s3 = _spin_matrices(j)
    if j > 50:
        logger.debug(f"Built dense spin operators for j={j} (dim {s1.shape[0]})")
    return SpinRep(j=j, dim=s1.shape[0], s1=s1, s2=s2, s3=s3)


def spin_expectation(rep: SpinRep, psi: np.ndarray) -> np.ndarray:
    """
    Real 3-vector of spin expectation values for a (not necessarily normalized) state.
    """
    psi = np.asarray(psi, dtype=complex)
    norm_sq = np.vdot(psi, psi).real
    if norm_sq <= 0:
        raise ValueError("Cannot take expectation values in the zero vector")
    return np.array([np.vdot(psi, op @ psi).real for op in rep.ops]) / norm_sq


def rotation_operator(rep: SpinRep, phi: float, theta: float, psi: float) -> np.ndarray:
    """
    Euler rotation ``D(phi, theta, psi) = exp(-i phi s3) exp(-i theta s2) exp(-i psi s3)``.

    Args:
        rep: Spin representation
        phi, theta, psi: Euler angles in radians

    Returns:
        Unitary matrix of size rep.dim

    Raises:
        ValueError: If any angle is not finite
    """
    angles = np.array([phi, theta, psi], dtype=float)
    if not np.all(np.isfinite(angles)):
        raise ValueError(f"Euler angles must be finite, got {angles}")

    m = rep.m_values
    left = np.exp(-1j * phi * m)
    right = np.exp(-1j * psi * m)
    middle = expm(-1j * theta * np.asarray(rep.s2))
    return left[:, None] * middle * right[None, :]


def direction_angles(direction) -> Tuple[float, float]:
    """Polar angle theta and azimuth phi of a unit 3-vector."""
    x = check_unit_vector(direction)
    theta = float(np.arccos(np.clip(x[2], -1.0, 1.0)))
    phi = float(np.arctan2(x[1], x[0]))
    return theta, phi


@dataclass(frozen=True, eq=False)
class CoherentState:
    """Spin coherent state |x> maximally polarized along ``direction``."""

    j: float
    direction: np.ndarray
    amplitudes: np.ndarray


def coherent_amplitudes(j: SpinLike, directions: np.ndarray) -> np.ndarray:
    """
    Coherent-state amplitudes for a batch of directions.

    Uses the Wigner form
    ``<j,m|x> = binom(2j, j+m)^(1/2) e^(-i m phi) cos^(j+m)(theta/2) sin^(j-m)(theta/2)``.

    Args:
        j: Spin quantum number
        directions: Array of shape (3,) or (N, 3); rows need not be validated here

    Returns:
        Complex array of shape (dim,) or (N, dim)
    """
    j = parse_spin(j)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    single = np.asarray(directions).ndim == 1

    dim = int(round(2 * j)) + 1
    m = j - np.arange(dim)

    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])

    half_cos = np.cos(theta / 2)[:, None]
    half_sin = np.sin(theta / 2)[:, None]
    binom = np.sqrt(comb(2 * j, j + m))

    amps = (
        binom[None, :]
        * np.exp(-1j * phi[:, None] * m[None, :])
        * half_cos ** (j + m)[None, :]
        * half_sin ** (j - m)[None, :]
    )
    return amps[0] if single else amps


def coherent_state(rep: SpinRep, direction) -> CoherentState:
    """
    Coherent spin state along a unit direction.

    Args:
        rep: Spin representation
        direction: Unit 3-vector (norm within 1e-9)

    Returns:
        CoherentState with <x|s|x> = j x

    Raises:
        ValueError: If direction is not a unit vector

    Example:
        >>> state = coherent_state(make_spin_ops(1), [0, 0, 1])
        >>> np.round(np.abs(state.amplitudes), 12)
        array([1., 0., 0.])
    """
    x = check_unit_vector(direction)
    amps = coherent_amplitudes(rep.j, x)
    return CoherentState(j=rep.j, direction=x, amplitudes=amps)


def coherent_overlap_sq(j: SpinLike, a, b) -> float:
    """Closed form ``|<a|b>|^2 = ((1 + a.b)/2)^(2j)``."""
    j = parse_spin(j)
    cos_ab = float(np.dot(check_unit_vector(a, "a"), check_unit_vector(b, "b")))
    return ((1.0 + cos_ab) / 2.0) ** (2 * j)


def tetrahedral_directions() -> np.ndarray:
    """Unit vectors to the four vertices of a regular tetrahedron, shape (4, 3)."""
    vertices = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ])
    return vertices / np.sqrt(3.0)


def quadrature_size(j: SpinLike) -> Tuple[int, int]:
    """Default (n_theta, n_phi) grid, exact for the polynomial integrands at spin j."""
    j = parse_spin(j)
    n_theta = int(np.ceil(4 * j)) + 8
    n_phi = int(np.ceil(8 * j)) + 16
    return n_theta, n_phi


def sphere_quadrature(n_theta: int, n_phi: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Product quadrature on the unit sphere.

    Gauss-Legendre in cos(theta) times the uniform rule in phi.

    Args:
        n_theta: Number of Gauss-Legendre nodes in cos(theta)
        n_phi: Number of equally spaced azimuths

    Returns:
        Tuple of (directions, weights) with shapes (N, 3) and (N,);
        weights sum to 4*pi

    Raises:
        ValueError: If either size is not positive
    """
    if n_theta < 1 or n_phi < 1:
        raise ValueError(f"Quadrature sizes must be positive, got ({n_theta}, {n_phi})")

    z, wz = leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    wphi = np.full(n_phi, 2 * np.pi / n_phi)

    zz, pp = np.meshgrid(z, phi, indexing='ij')
    rho = np.sqrt(np.clip(1.0 - zz**2, 0.0, None))
    directions = np.stack(
        [rho * np.cos(pp), rho * np.sin(pp), zz], axis=-1
    ).reshape(-1, 3)
    weights = np.outer(wz, wphi).ravel()
    return directions, weights


def resolution_of_identity(
    rep: SpinRep,
    n_theta: Optional[int] = None,
    n_phi: Optional[int] = None,
) -> np.ndarray:
    """
    Quadrature value of ``(2j+1)/(4 pi) * integral |x><x| dOmega``.

    Should reproduce the identity matrix; returned for checking.
    """
    default_theta, default_phi = quadrature_size(rep.j)
    dirs, weights = sphere_quadrature(n_theta or default_theta, n_phi or default_phi)
    amps = coherent_amplitudes(rep.j, dirs)
    integral = np.einsum('n,ni,nk->ik', weights, amps, amps.conj())
    return rep.dim / (4 * np.pi) * integral
