"""
Thermal spin operators and their coherent-state representations.

Covers the thermal operator exp(-beta t.s), its closed-form Q- and positive
P-representations, a quadrature check of the P-representation matrix
elements, the Ito drift and diffusion of closed-loop spinometry with its
Fokker-Planck stationary density, and the Lindblad increment that the
closed-loop triaxial spinometer realizes to second order in theta.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import comb

from ..core.measurement import MeasurementPair, hermitian_function, make_pair
from ..core.spin_algebra import (
    SpinRep,
    coherent_amplitudes,
    make_spin_ops,
    parse_spin,
    quadrature_size,
    sphere_quadrature,
)
from ..utils.validation import check_unit_vector, hermitize

logger = logging.getLogger(__name__)

Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class ThermalSpec:
    """Spin-j thermal operator exp(-beta t.s) about a unit axis t."""

    j: float
    beta: float
    axis: np.ndarray = Z_AXIS

    def __post_init__(self):
        object.__setattr__(self, 'j', parse_spin(self.j))
        if not np.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")
        object.__setattr__(self, 'axis', check_unit_vector(self.axis, "thermal axis"))


def alpha_from_beta(beta: float, branch: str = 'small') -> float:
    """
    Feedback gain for inverse temperature beta.

    ``alpha = -tanh(beta/4)`` on the small branch; its reciprocal on the
    'reciprocal' branch. Both satisfy 1/alpha + alpha = -2 coth(beta/2).

    Raises:
        ValueError: For an unknown branch, or the reciprocal branch at beta = 0
    """
    alpha = -np.tanh(beta / 4.0)
    if branch == 'small':
        return float(alpha)
    if branch == 'reciprocal':
        if alpha == 0.0:
            raise ValueError("Reciprocal alpha branch is infinite at beta = 0")
        return float(1.0 / alpha)
    raise ValueError(f"Unknown alpha branch '{branch}' (use 'small' or 'reciprocal')")


def alpha_identities(alpha: float) -> Dict[str, float]:
    """``1/alpha + alpha`` and ``1/alpha - alpha``."""
    return {'sum': 1.0 / alpha + alpha, 'difference': 1.0 / alpha - alpha}


def _frame(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed orthonormal (e1, e2, t)."""
    t = check_unit_vector(axis, "thermal axis")
    helper = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, t) * t
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(t, e1)
    return e1, e2, t


def _component(rep: SpinRep, n: np.ndarray) -> np.ndarray:
    return n[0] * rep.s1 + n[1] * rep.s2 + n[2] * rep.s3


def thermal_operator(spec: ThermalSpec) -> np.ndarray:
    """Unnormalized ``exp(-beta t.s)``."""
    rep = make_spin_ops(spec.j)
    return hermitian_function(_component(rep, spec.axis), lambda w: np.exp(-spec.beta * w))


def thermal_density(spec: ThermalSpec) -> np.ndarray:
    """Thermal density matrix (unit trace)."""
    rho = thermal_operator(spec)
    return rho / np.trace(rho).real


def thermal_pairs(
    j, beta: float, theta: float, axis=Z_AXIS, branch: str = 'small'
) -> List[MeasurementPair]:
    """
    Closed-loop triaxial spinometer thermalizing about ``axis``.

    Pairs along e1, e2 and t of the thermal frame, all with gain
    ``alpha_from_beta(beta, branch)``; along t the feedback vanishes and the
    pair is synoptic.

    Example:
        >>> [p.tuning for p in thermal_pairs(0.5, 1.0, 0.1)]
        ['closed_loop', 'closed_loop', 'closed_loop']
    """
    rep = make_spin_ops(j)
    alpha = alpha_from_beta(beta, branch)
    t = check_unit_vector(axis, "thermal axis")
    return [
        make_pair(rep, 'closed_loop', theta, axis=n, alpha=alpha, thermal_axis=t)
        for n in _frame(t)
    ]


def q_representation(
    source: Union[ThermalSpec, np.ndarray], direction, closed_form: bool = True
) -> float:
    """
    Q-representation ``<x|rho|x>``.

    For a ThermalSpec the closed form ``(cosh(beta/2) - x.t sinh(beta/2))^(2j)``
    is used unless ``closed_form`` is False. For a matrix the coherent-state
    expectation is evaluated directly.

    Example:
        >>> round(q_representation(ThermalSpec(0.5, 2.0), [0, 0, -1]), 6)
        2.718282
    """
    x = check_unit_vector(direction)
    if isinstance(source, ThermalSpec):
        if closed_form:
            z = float(np.dot(x, source.axis))
            half = source.beta / 2
            return float((np.cosh(half) - z * np.sinh(half)) ** (2 * source.j))
        rho, j = thermal_operator(source), source.j
    else:
        rho = np.asarray(source, dtype=complex)
        j = (rho.shape[0] - 1) / 2

    amps = coherent_amplitudes(j, x)
    return float(np.vdot(amps, rho @ amps).real)


def _p_values(j: float, beta: float, z: np.ndarray) -> np.ndarray:
    half = beta / 2
    return (np.cosh(half) + z * np.sinh(half)) ** (-2 * j - 2)


def p_thermal(j, beta: float, axis, direction) -> float:
    """
    Positive P-representation of the spin-j thermal operator.

    ``P(x) = 1 / Q(-x | rho_th^(j+1)) = (cosh(beta/2) + x.t sinh(beta/2))^(-2j-2)``
    """
    j = parse_spin(j)
    if not np.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta}")
    z = float(np.dot(check_unit_vector(direction), check_unit_vector(axis, "thermal axis")))
    return float(_p_values(j, beta, z))


def p_reconstruct(
    j,
    beta: float,
    axis=Z_AXIS,
    n_theta: Optional[int] = None,
    n_phi: Optional[int] = None,
) -> np.ndarray:
    """
    ``(2j+1)/(4 pi) * integral P(x) |x><x| dOmega`` by sphere quadrature.

    Reproduces the unnormalized thermal operator.
    """
    j = parse_spin(j)
    t = check_unit_vector(axis, "thermal axis")
    default_theta, default_phi = quadrature_size(j)
    dirs, weights = sphere_quadrature(n_theta or 4 * default_theta, n_phi or default_phi)

    # Rotate the grid so its polar axis is t
    e1, e2, _ = _frame(t)
    rotation = np.stack([e1, e2, t], axis=1)
    dirs = dirs @ rotation.T

    values = _p_values(j, beta, dirs @ t)
    amps = coherent_amplitudes(j, dirs)
    integral = np.einsum('n,ni,nk->ik', weights * values, amps, amps.conj())
    return (2 * j + 1) / (4 * np.pi) * integral


@dataclass
class MmprimeCheck:
    """Quadrature check of one thermal matrix element."""

    lhs: float
    rhs: float
    defect: float
    resolved: bool


def _mmprime_integral(j: float, m: float, m_prime: float, beta: float, order: int) -> float:
    z, wz = leggauss(order)
    n_phi = int(4 * j) + 8
    phi = 2 * np.pi * np.arange(n_phi) / n_phi

    # <j,m|x> as a function of (z, phi) with the Wigner phase e^{-i m phi}
    def amplitude(mm):
        return (
            np.sqrt(comb(2 * j, j + mm))
            * ((1 + z) / 2) ** ((j + mm) / 2)
            * ((1 - z) / 2) ** ((j - mm) / 2)
        )

    radial = np.sum(wz * _p_values(j, beta, z) * amplitude(m) * amplitude(m_prime))
    azimuthal = np.mean(np.exp(-1j * (m - m_prime) * phi)) * 2 * np.pi
    return float(((2 * j + 1) / (4 * np.pi) * radial * azimuthal).real)


def verify_mmprime(
    j,
    m: float,
    m_prime: float,
    beta: float,
    order: int = 256,
    tol: float = 1e-10,
) -> MmprimeCheck:
    """
    Check ``(2j+1)/(4 pi) * integral P(x) <j,m|x><x|j,m'> dOmega = e^(-beta m) delta_mm'``.

    Gauss-Legendre in z of the given order times the uniform azimuthal rule.
    Doubling the order and comparing flags under-resolution.

    Args:
        j: Spin
        m, m_prime: Magnetic quantum numbers, |m| <= j
        beta: Inverse temperature
        order: Gauss-Legendre order
        tol: Allowed change under order doubling

    Returns:
        MmprimeCheck with the integral, the exact value and their difference

    Raises:
        ValueError: If |m| or |m'| exceeds j or j - m is not an integer
    """
    j = parse_spin(j)
    for label, mm in (('m', m), ("m'", m_prime)):
        if abs(mm) > j + 1e-12 or abs((j - mm) - round(j - mm)) > 1e-12:
            raise ValueError(f"{label}={mm} is not a valid magnetic quantum number for j={j}")

    lhs = _mmprime_integral(j, m, m_prime, beta, order)
    refined = _mmprime_integral(j, m, m_prime, beta, 2 * order)
    resolved = abs(refined - lhs) <= tol * max(1.0, abs(refined))
    if not resolved:
        logger.warning(
            f"Quadrature under-resolved for j={j}, m={m}, m'={m_prime}, beta={beta}: "
            f"order {order} -> {2 * order} changed the integral by {abs(refined - lhs):.3e}"
        )

    rhs = float(np.exp(-beta * m)) if m == m_prime else 0.0
    return MmprimeCheck(lhs=lhs, rhs=rhs, defect=abs(lhs - rhs), resolved=resolved)


# Ito drift and diffusion ------------------------------------------------------


@dataclass(frozen=True)
class DriftDiffusion:
    """
    Ito increment ``dx = g_s^2 a(x) + g_s b(x) . W`` with gain ``g_s = 2 theta j``.
    """

    j: float
    alpha: float
    axis: np.ndarray

    def drift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t, j, a = self.axis, self.j, self.alpha
        z = float(np.dot(x, t))
        return (
            -x * (a * (2 * j - 1) * z + (1 + 0.5 * a**2)) / (4 * j**2)
            + t * (a * (2 * j + 1) - 0.5 * a**2 * z) / (4 * j**2)
        )

    def diffusion(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t, a = self.axis, self.alpha
        z = float(np.dot(x, t))
        return (np.eye(3) - np.outer(x, x) + a * (np.outer(t, x) - z * np.eye(3))) / (2 * self.j)

    def gain(self, theta: float) -> float:
        return 2 * theta * self.j

    def increment(self, x, theta: float, noise) -> np.ndarray:
        """One Ito step for a given Wiener increment."""
        g = self.gain(theta)
        return g**2 * self.drift(x) + g * self.diffusion(x) @ np.asarray(noise, dtype=float)


def drift_diffusion(j, alpha: float, axis=Z_AXIS) -> DriftDiffusion:
    """
    Drift vector and diffusion matrix of closed-loop spinometry.

    Raises:
        ValueError: If j < 1/2 or the axis is not a unit vector
    """
    j = parse_spin(j)
    if j < 0.5:
        raise ValueError(f"Drift-diffusion needs j >= 1/2, got {j}")
    return DriftDiffusion(j=j, alpha=float(alpha), axis=check_unit_vector(axis, "thermal axis"))


def radial_moment_increment(dd: DriftDiffusion, x, m: int) -> float:
    """
    Mean increment of |x|^m per unit g_s^2.

    ``m(m-2)/2 |x|^(m-4) x.b.b^T.x + m |x|^(m-2) (x.a + tr(b b^T)/2)``;
    vanishes on the unit sphere.
    """
    x = np.asarray(x, dtype=float)
    r2 = float(np.dot(x, x))
    b = dd.diffusion(x)
    bb = b @ b.T
    first = 0.5 * m * (m - 2) * r2 ** ((m - 4) / 2) * float(x @ bb @ x)
    second = m * r2 ** ((m - 2) / 2) * (float(np.dot(x, dd.drift(x))) + 0.5 * np.trace(bb))
    return first + second


def stationary_pdf(j, alpha: float, z: float) -> float:
    """
    Normalized Fokker-Planck stationary density on the sphere at ``z = x.t``.

    Proportional to ``(alpha + 1/alpha - 2z)^(-2j-2)``, normalized to unit
    integral over the sphere and symmetric under alpha -> 1/alpha. Evaluated
    in the variable u = 2|alpha|/(1+alpha^2) so that small alpha stays
    accurate; alpha = 0 gives the uniform density 1/(4 pi).

    Raises:
        ValueError: If |z| > 1 or |alpha| = 1 (zero temperature)
    """
    j = parse_spin(j)
    if abs(z) > 1 + 1e-12:
        raise ValueError(f"z must lie in [-1, 1], got {z}")
    if abs(abs(alpha) - 1.0) < 1e-12:
        raise ValueError("Stationary density is singular at |alpha| = 1")
    if alpha == 0.0:
        return 1.0 / (4 * np.pi)

    n = 2 * j + 1
    u = 2 * abs(alpha) / (1 + alpha**2)
    zs = np.sign(alpha) * z
    norm = 2 * (1 + u) ** (-n) * np.expm1(n * (np.log1p(u) - np.log1p(-u)))
    return float(n / np.pi * u * (1 - u * zs) ** (-n - 1) / norm)


# Lindblad form ----------------------------------------------------------------


def _dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    LdL = L.conj().T @ L
    return L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)


def lindblad_increment(
    rho: np.ndarray, j, theta: float, alpha: float, axis=Z_AXIS
) -> np.ndarray:
    """
    Lindblad increment of closed-loop triaxial spinometry.

    ``theta^2 [(1-alpha)^2 D[s-] + (1+alpha)^2 D[s+] + D[s_t]]`` with
    ``s+- = (s_1 +- i s_2)/sqrt(2)`` in a frame whose third axis is t.
    The thermal operator about t is stationary when alpha = -tanh(beta/4).
    """
    rep = make_spin_ops(j)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (rep.dim, rep.dim):
        raise ValueError(f"rho must be {rep.dim}x{rep.dim}, got {rho.shape}")

    e1, e2, t = _frame(axis)
    s1, s2, s3 = _component(rep, e1), _component(rep, e2), _component(rep, t)
    s_plus = (s1 + 1j * s2) / np.sqrt(2)
    s_minus = (s1 - 1j * s2) / np.sqrt(2)

    delta = (
        (1 - alpha) ** 2 * _dissipator(s_minus, rho)
        + (1 + alpha) ** 2 * _dissipator(s_plus, rho)
        + _dissipator(s3, rho)
    )
    return hermitize(theta**2 * delta)
