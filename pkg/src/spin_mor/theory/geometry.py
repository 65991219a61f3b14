"""
Curvature of gabion-Kahler manifolds.

The Riemann tensor is read off from the Kahler potential:

    R_{a b~ c d~} = k_{,a b~ c d~} - k_{,b~ d~ m} g^{m n~} k_{,n~ a c}

For the flat potential k = |psi|^2 / 2 every derivative is a product-sum
contraction of the Jacobian A and the second-derivative tensor B, giving
R = 1/2 <(I - P_K) B_{bd} | (I - P_K) B_{ac}>. The Fubini-Study potential
k = log|psi|^2 / 2 goes through the same pipeline with explicit log
derivatives. Ricci contraction carries an explicit minus sign and the scalar
curvature is twice the trace of the mixed Ricci tensor.

Index convention for 4-index tables: R[a, b, c, d] = R_{a b~ c d~}.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import pinvh

from ..core.gk_manifold import (
    DEFAULT_SVD_TOL,
    GKState,
    gauge_dimension_estimate,
    random_gk_state,
    second_derivatives,
    tangent_frame,
)
from ..utils.validation import is_hermitian

logger = logging.getLogger(__name__)

METRICS = ('flat', 'fubini_study')
RIEMANN_MAX_DIM = 100
RICCI_MAX_DIM = 128


@dataclass
class CurvatureReport:
    """
    Curvature tensors at one manifold point.

    ``riemann`` is None when the 4-index table was not materialized.
    """

    ricci: np.ndarray
    ricci_eigenvalues: np.ndarray
    scalar: float
    kappa: float
    metric: str
    riemann: Optional[np.ndarray] = field(default=None, repr=False)
    bianchi_defects: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict:
        """JSON-compatible summary."""
        return {
            'metric': self.metric,
            'scalar': float(self.scalar),
            'kappa': float(self.kappa),
            'ricci_eigenvalues': [float(x) for x in self.ricci_eigenvalues],
            'bianchi_defects': self.bianchi_defects,
        }


def _check_size(state: GKState, max_dim: int, what: str):
    if state.n_coords > max_dim:
        raise ValueError(
            f"{what} needs complex dimension {state.n_coords} <= {max_dim}; "
            f"raise max_dim or use a smaller state"
        )


def _normal_second_derivatives(state: GKState, svd_tol: float):
    """Frame, B and (I - P_K) B reshaped as (D, m, m)."""
    frame = tangent_frame(state, svd_tol, dense=True)
    B = second_derivatives(state)
    D, m = frame.A.shape
    flat_B = B.reshape(D, m * m)
    tangential = frame.A @ (0.5 * (frame.g_pinv @ (frame.A.conj().T @ flat_B)))
    PB = (flat_B - tangential).reshape(D, m, m)
    return frame, B, PB


def _bianchi_defects(R: np.ndarray) -> Dict[str, float]:
    scale = max(np.max(np.abs(R)), 1e-300)
    return {
        'swap_holomorphic': float(np.max(np.abs(R - R.transpose(2, 1, 0, 3))) / scale),
        'swap_antiholomorphic': float(np.max(np.abs(R - R.transpose(0, 3, 2, 1))) / scale),
    }


def _mixed_eigenvalues(g_inv: np.ndarray, ricci: np.ndarray) -> np.ndarray:
    mixed = g_inv @ ricci.T
    return np.sort(np.linalg.eigvals(mixed).real)


def _fubini_study_tables(state: GKState, svd_tol: float):
    """Riemann table, inverse metric and potential for k = log N / 2."""
    frame = tangent_frame(state, svd_tol, dense=True)
    A, psi = frame.A, frame.psi
    B = second_derivatives(state)
    N = float(np.vdot(psi, psi).real)

    # Derivatives of N = <psi|psi>; unbarred index first
    Na = psi.conj() @ A                                   # d_a N
    Nb = Na.conj()                                        # d_b~ N
    Nab = (A.conj().T @ A).T                              # d_a d_b~ N
    Nag = np.einsum('i,iag->ag', psi.conj(), B)           # d_a d_g N
    Nbd = Nag.conj()                                      # d_b~ d_d~ N
    Nagb = np.einsum('ib,iag->agb', A.conj(), B)          # d_a d_g d_b~ N
    X = np.einsum('ia,ibd->abd', A, B.conj())             # d_a d_b~ d_d~ N
    Nagbd = np.einsum('ibd,iag->abgd', B.conj(), B)       # [a, b, g, d]

    L2 = Nab / N - np.outer(Na, Nb) / N**2

    L3 = (
        Nagb.transpose(0, 2, 1) / N
        - np.einsum('ab,g->abg', Nab, Na) / N**2
        - (np.einsum('ag,b->abg', Nag, Nb) + np.einsum('a,gb->abg', Na, Nab)) / N**2
        + 2 * np.einsum('a,b,g->abg', Na, Nb, Na) / N**3
    )

    # d_d~ of each term of L3
    T1 = Nagbd / N - np.einsum('agb,d->abgd', Nagb, Nb) / N**2
    T2 = (
        -np.einsum('abd,g->abgd', X, Na) / N**2
        - np.einsum('ab,gd->abgd', Nab, Nab) / N**2
        + 2 * np.einsum('ab,g,d->abgd', Nab, Na, Nb) / N**3
    )
    T3 = (
        -np.einsum('agd,b->abgd', Nagb, Nb) / N**2
        - np.einsum('ag,bd->abgd', Nag, Nbd) / N**2
        + 2 * np.einsum('ag,b,d->abgd', Nag, Nb, Nb) / N**3
        - np.einsum('ad,gb->abgd', Nab, Nab) / N**2
        - np.einsum('a,gbd->abgd', Na, X) / N**2
        + 2 * np.einsum('a,gb,d->abgd', Na, Nab, Nb) / N**3
    )
    T4 = (
        2 * (
            np.einsum('ad,b,g->abgd', Nab, Nb, Na)
            + np.einsum('a,bd,g->abgd', Na, Nbd, Na)
            + np.einsum('a,b,gd->abgd', Na, Nb, Nab)
        ) / N**3
        - 6 * np.einsum('a,b,g,d->abgd', Na, Nb, Na, Nb) / N**4
    )
    L4 = T1 + T2 + T3 + T4

    g_inv = pinvh(0.5 * (L2.T + L2.conj()) / 2, rtol=svd_tol)
    R = 0.5 * L4 - 0.25 * np.einsum('bmd,mn,ang->abgd', L3.conj(), g_inv, L3)
    return R, g_inv, 0.5 * np.log(N)


def riemann_tensor(
    state: GKState,
    metric: str = 'flat',
    svd_tol: float = DEFAULT_SVD_TOL,
    max_dim: int = RIEMANN_MAX_DIM,
) -> CurvatureReport:
    """
    Full curvature report including the 4-index Riemann table.

    Args:
        state: GK state (nonzero)
        metric: 'flat' (k = |psi|^2/2) or 'fubini_study' (k = log|psi|^2/2)
        svd_tol: Relative cutoff for metric pseudoinverses
        max_dim: Largest coordinate dimension for which the table is built

    Returns:
        CurvatureReport with riemann and Bianchi defects populated

    Raises:
        ValueError: If the metric is unknown, the state is zero or too large

    Example:
        >>> s = random_gk_state(order=2, rank=1, d=2, seed=1)
        >>> report = riemann_tensor(s)
        >>> round(report.scalar * report.kappa, 8)
        -4.0
    """
    # Validate inputs
    if metric not in METRICS:
        raise ValueError(f"Unknown metric '{metric}'. Available: {', '.join(METRICS)}")
    _check_size(state, max_dim, "Riemann table")

    if metric == 'flat':
        frame, _, PB = _normal_second_derivatives(state, svd_tol)
        R = 0.5 * np.einsum('ibd,iag->abgd', PB.conj(), PB)
        g_inv, kappa = frame.g_pinv, frame.kappa
    else:
        R, g_inv, kappa = _fubini_study_tables(state, svd_tol)

    ricci = -np.einsum('gd,adgb->ab', g_inv, R)
    scalar = 2.0 * float(np.sum(g_inv * ricci).real)
    logger.debug(f"Riemann table ({metric}) at complex dim {state.n_coords}: scalar {scalar:.6g}")

    return CurvatureReport(
        ricci=ricci,
        ricci_eigenvalues=_mixed_eigenvalues(g_inv, ricci),
        scalar=scalar,
        kappa=kappa,
        metric=metric,
        riemann=R,
        bianchi_defects=_bianchi_defects(R),
    )


def curvature(
    state: GKState,
    metric: str = 'flat',
    svd_tol: float = DEFAULT_SVD_TOL,
    max_dim: int = RICCI_MAX_DIM,
) -> CurvatureReport:
    """
    Ricci tensor, mixed Ricci eigenvalues and scalar curvature.

    The flat metric contracts the Ricci tensor directly from (I - P_K) B
    without building the 4-index table. The Fubini-Study metric goes
    through riemann_tensor.

    Raises:
        ValueError: If the metric is unknown, the state is zero or too large
    """
    if metric not in METRICS:
        raise ValueError(f"Unknown metric '{metric}'. Available: {', '.join(METRICS)}")

    if metric == 'fubini_study':
        return riemann_tensor(state, metric, svd_tol, max_dim=max_dim)

    _check_size(state, max_dim, "Ricci contraction")
    frame, _, PB = _normal_second_derivatives(state, svd_tol)
    g_inv = frame.g_pinv
    ricci = -0.5 * np.einsum('gd,idb,iag->ab', g_inv, PB.conj(), PB, optimize=True)
    scalar = 2.0 * float(np.sum(g_inv * ricci).real)

    return CurvatureReport(
        ricci=ricci,
        ricci_eigenvalues=_mixed_eigenvalues(g_inv, ricci),
        scalar=scalar,
        kappa=frame.kappa,
        metric=metric,
    )


def riemann_contract(R: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """
    Sectional numerator from the Riemann table for real tangent vectors u, v.

    ``R(v, u~, v, u~) + R(u, v~, u, v~) - 2 R(u, u~, v, v~)``
    """
    def contract(a, b, c, d):
        return np.einsum('abgd,a,b,g,d->', R, a, b.conj(), c, d.conj())

    value = contract(v, u, v, u) + contract(u, v, u, v) - 2 * contract(u, u, v, v)
    return float(value.real)


def _section_terms(state: GKState, u: np.ndarray, v: np.ndarray, svd_tol: float):
    frame, B, PB = _normal_second_derivatives(state, svd_tol)
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != (state.n_coords,) or v.shape != (state.n_coords,):
        raise ValueError(f"Tangent vectors must have length {state.n_coords}")

    Au, Av = frame.A @ u, frame.A @ v
    psi_uu = np.einsum('iag,a,g->i', B, u, u)
    psi_vv = np.einsum('iag,a,g->i', B, v, v)
    psi_uv = np.einsum('iag,a,g->i', B, u, v)
    return frame, Au, Av, psi_uu, psi_vv, psi_uv


def metric_norm_sq(state: GKState, u: np.ndarray, svd_tol: float = DEFAULT_SVD_TOL) -> float:
    """Real metric length |A u|^2 of a tangent coordinate vector."""
    frame = tangent_frame(state, svd_tol)
    Au = frame.A_dot(np.asarray(u, dtype=complex))
    return float(np.vdot(Au, Au).real)


def _wedge_sq(Au: np.ndarray, Av: np.ndarray) -> float:
    return float(
        np.vdot(Au, Au).real * np.vdot(Av, Av).real - np.vdot(Au, Av).real ** 2
    )


def _sectional_numerator(frame, psi_uu, psi_vv, psi_uv) -> float:
    n_uu = frame.project_normal(psi_uu)
    n_vv = frame.project_normal(psi_vv)
    n_uv = frame.project_normal(psi_uv)
    return float(np.vdot(n_uu, n_vv).real - np.vdot(n_uv, n_uv).real)


def sectional(
    state: GKState,
    u: np.ndarray,
    v: np.ndarray,
    normal: Optional[np.ndarray] = None,
    svd_tol: float = DEFAULT_SVD_TOL,
    tol: float = 1e-12,
) -> float:
    """
    Sectional curvature of the real 2-plane spanned by tangent vectors U = A u, V = A v.

    Without ``normal`` this is the intrinsic curvature
    ``(Re<psi_uu|P|psi_vv> - <psi_uv|P|psi_uv>) / |U ^ V|^2`` with P = I - P_K.
    With ``normal`` it is the directed curvature along that normal, built from
    the 2x2 determinant of second fundamental form components.

    Args:
        state: GK state
        u, v: Complex coordinate vectors
        normal: Optional normal direction in H
        svd_tol: Metric pseudoinverse cutoff
        tol: Smallest accepted |U ^ V|^2 relative to |U|^2 |V|^2

    Returns:
        Sectional curvature (real)

    Raises:
        ValueError: If the section is degenerate
    """
    frame, Au, Av, psi_uu, psi_vv, psi_uv = _section_terms(state, u, v, svd_tol)
    den = _wedge_sq(Au, Av)
    scale = np.vdot(Au, Au).real * np.vdot(Av, Av).real
    if den <= tol * max(scale, 1e-300):
        raise ValueError(f"Degenerate section: |U ^ V|^2 = {den:.3e}")

    if normal is None:
        return _sectional_numerator(frame, psi_uu, psi_vv, psi_uv) / den

    normal = np.asarray(normal, dtype=complex)
    n = frame.project_normal(normal)
    n_norm = np.linalg.norm(n)
    if n_norm <= 1e-10 * np.linalg.norm(normal):
        raise ValueError("Normal direction lies in the tangent space")
    n = n / n_norm
    h_uu = np.vdot(n, psi_uu).real
    h_vv = np.vdot(n, psi_vv).real
    h_uv = np.vdot(n, psi_uv).real
    return float((h_uu * h_vv - h_uv**2) / den)


def directed_sectional(state: GKState, u, v, normal, svd_tol: float = DEFAULT_SVD_TOL) -> float:
    """Directed sectional curvature along an explicit normal."""
    return sectional(state, u, v, normal=normal, svd_tol=svd_tol)


def holomorphic_bisectional(
    state: GKState, u: np.ndarray, v: np.ndarray, svd_tol: float = DEFAULT_SVD_TOL
) -> float:
    """
    Sum of sectional numerators for (U, V) and (U, JV) over |U|^2 |V|^2.

    Equals ``-2 |(I - P_K) psi_uv|^2 / (|U|^2 |V|^2)``, never positive.
    The literal sum ``sectional(U, V) + sectional(U, JV)`` divides each term
    by its own |U ^ V|^2 instead, a different normalization with the same sign.
    """
    frame, Au, Av, psi_uu, psi_vv, psi_uv = _section_terms(state, u, v, svd_tol)
    scale = np.vdot(Au, Au).real * np.vdot(Av, Av).real
    if scale == 0:
        raise ValueError("Tangent vector with zero metric length")

    num = _sectional_numerator(frame, psi_uu, psi_vv, psi_uv)
    num_j = _sectional_numerator(frame, psi_uu, -psi_vv, 1j * psi_uv)
    return (num + num_j) / scale


def tangent_from_operator(
    state: GKState, q: np.ndarray, svd_tol: float = DEFAULT_SVD_TOL
) -> np.ndarray:
    """
    Tangent vector generated by a Hermitian operator.

    ``v = g^+ d_{c~} <psi|q|psi> / 2``, so that A v = P_K q psi and
    ``|A v|^2 = <psi|q P_K q|psi>``.

    Raises:
        ValueError: If q is not Hermitian or has the wrong size
    """
    q = np.asarray(q, dtype=complex)
    if q.shape != (state.dim, state.dim):
        raise ValueError(f"Operator must be {state.dim}x{state.dim}, got {q.shape}")
    if not is_hermitian(q, 1e-10):
        raise ValueError("Tangent generator q must be Hermitian")

    frame = tangent_frame(state, svd_tol)
    return frame.pullback(q @ frame.psi)


def analytic_curvature(
    kind: str,
    kappa: Optional[float] = None,
    spins: Optional[Sequence[float]] = None,
    n: Optional[int] = None,
    n_orb: Optional[int] = None,
) -> float:
    """
    Closed-form scalar curvatures.

    - rank1: ``-(8/kappa) * sum_{k != m} j_k j_m`` for spins j_k
    - slater: ``-(2/kappa) n (n-1) (n_orb-n) (n_orb-n-1)``
    - slater_fubini_study: ``4 n n_orb (n_orb-n)``

    Raises:
        ValueError: If kind is unknown, parameters are missing, or n_orb < n
    """
    if kind == 'rank1':
        if spins is None or kappa is None:
            raise ValueError("rank1 curvature needs spins and kappa")
        j = np.asarray(spins, dtype=float)
        pair_sum = j.sum() ** 2 - np.sum(j**2)
        return float(-(8.0 / kappa) * pair_sum)

    if kind not in ('slater', 'slater_fubini_study'):
        raise ValueError(f"Unknown curvature kind '{kind}'")

    if n is None or n_orb is None:
        raise ValueError(f"{kind} curvature needs n and n_orb")
    if n_orb < n:
        raise ValueError(f"Slater state vanishes for n_orb={n_orb} < n={n}")

    if kind == 'slater':
        if kappa is None:
            raise ValueError("slater curvature needs kappa")
        return float(-(2.0 / kappa) * n * (n - 1) * (n_orb - n) * (n_orb - n - 1))
    return float(4 * n * n_orb * (n_orb - n))


@dataclass
class RicciExperiment:
    """Mixed Ricci eigenvalues sampled at random manifold points."""

    order: int
    rank: int
    eigenvalues: np.ndarray
    scalars: np.ndarray
    numeric_ranks: List[int]
    gauge_estimate: int

    @property
    def annotation(self) -> str:
        return f"rank x order = {self.rank} x {self.order} = {self.rank * self.order}"


def ricci_eigenvalue_experiment(
    order: int,
    rank: int,
    d: int,
    seed: int,
    n_points: int,
    svd_tol: float = DEFAULT_SVD_TOL,
    max_dim: int = RICCI_MAX_DIM,
) -> RicciExperiment:
    """
    Mixed Ricci eigenvalues at ``n_points`` random normalized GK states.

    Point p uses seed ``[seed, p]``.

    Raises:
        ValueError: If the coordinate dimension exceeds max_dim
    """
    eigs, scalars, ranks = [], [], []
    estimate = 0
    for p in range(n_points):
        state = random_gk_state(order, rank, d, seed=[seed, p])
        report = curvature(state, 'flat', svd_tol, max_dim=max_dim)
        frame_rank = tangent_frame(state, svd_tol).numeric_rank
        eigs.append(report.ricci_eigenvalues)
        scalars.append(report.scalar)
        ranks.append(frame_rank)
        estimate = gauge_dimension_estimate(state)

    logger.info(
        f"Ricci experiment order={order} rank={rank}: {n_points} points, "
        f"median scalar {np.median(scalars):.4g}"
    )
    return RicciExperiment(
        order=order,
        rank=rank,
        eigenvalues=np.array(eigs),
        scalars=np.array(scalars),
        numeric_ranks=ranks,
        gauge_estimate=estimate,
    )
