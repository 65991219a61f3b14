"""
Projective model order reduction onto gabion-Kahler manifolds.

Hilbert states are projected onto a GK manifold by a metric-pseudoinverse
(Gauss-Newton) gradient flow on the coefficients. Projected trajectories
evolve the coefficients directly: Hamiltonian steps go through the
tangent-space pullback of the generator, measurement branches are applied
to the GK state and the result is re-projected from a warm start.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from ..core.gk_manifold import (
    DEFAULT_SVD_TOL,
    DENSE_LIMIT,
    GKState,
    TangentFrame,
    evaluate,
    gauge_dimension_estimate,
    random_gk_state,
    tangent_frame,
)
from ..core.measurement import MeasurementPair, apply_local, u_mix
from ..utils.validation import BrokenPairError, ConvergenceError
from .trajectory import (
    PROB_TOL,
    SimulationConfig,
    TrajectoryRecord,
    half_step_propagator,
    low_pass,
    trajectory_rng,
)

logger = logging.getLogger(__name__)

MAX_STEP = 1.0
MIN_STEP = 1e-12
GROW_AFTER = 5
BALANCE_EVERY = 50
DIVERGENCE_FACTOR = 10.0
GAUGE_JITTER = 1e-8
INTEGRATORS = ('euler', 'rk4')


@dataclass
class ProjectionResult:
    """Outcome of projecting a Hilbert state onto a GK manifold."""

    gk: GKState
    distance: float
    fidelity: float
    iterations: int
    converged: bool
    residual: float = 0.0

    @property
    def psi(self) -> np.ndarray:
        return evaluate(self.gk)


@dataclass
class ProjectedRun:
    """Projected trajectory with its click record and shadow fidelities."""

    record: TrajectoryRecord
    gk: GKState
    rank: int
    fidelity: Optional[np.ndarray] = None
    flagged_steps: List[int] = field(default_factory=list)


def fidelity(psi_k: np.ndarray, psi0: np.ndarray) -> float:
    """
    Quantum fidelity ``|<psi_K|psi_0>| / (|psi_K| |psi_0|)``.

    Raises:
        ValueError: If either vector is zero or the lengths differ

    Example:
        >>> fidelity(np.array([1, 0]), np.array([0, 1]))
        0.0
    """
    a = np.asarray(psi_k, dtype=complex).ravel()
    b = np.asarray(psi0, dtype=complex).ravel()
    if a.shape != b.shape:
        raise ValueError(f"State lengths differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("Fidelity is undefined for the zero vector")
    return float(min(abs(np.vdot(a, b)) / (na * nb), 1.0))


def _jittered(state: GKState, rng: np.random.Generator) -> GKState:
    flat = state.flat()
    noise = rng.standard_normal(flat.size) + 1j * rng.standard_normal(flat.size)
    scale = GAUGE_JITTER * np.linalg.norm(flat) / np.sqrt(2 * flat.size)
    return state.with_flat(flat + scale * noise)


def generic_rank(state: GKState) -> int:
    """Metric rank expected away from singular points: the gauge estimate capped at dim H."""
    return min(gauge_dimension_estimate(state), state.dim)


def safe_frame(
    state: GKState,
    svd_tol: float = DEFAULT_SVD_TOL,
    rng: Optional[np.random.Generator] = None,
    check_rank: bool = False,
) -> Tuple[GKState, TangentFrame]:
    """
    Tangent frame, recomputed after a gauge jitter of relative size 1e-8 at a singular point.

    The retry runs when the decomposition fails. With ``check_rank`` it also
    runs when the numeric rank of g falls below ``generic_rank``, as at an
    exact rank degeneracy (two equal rows). Slater states are never checked.

    Args:
        state: GK state
        svd_tol: Relative cutoff of the pseudoinverse
        rng: Jitter stream; seeded from the coordinate count when omitted
        check_rank: Also retry on a detected rank drop

    Returns:
        Tuple of (state actually used, frame)
    """
    rng = rng or np.random.default_rng(state.n_coords)
    try:
        frame = tangent_frame(state, svd_tol)
    except np.linalg.LinAlgError:
        logger.warning(f"Singular tangent frame at rank {state.rank}; retrying after gauge jitter")
        jittered = _jittered(state, rng)
        return jittered, tangent_frame(jittered, svd_tol)

    if check_rank and not state.antisymmetric:
        expected = generic_rank(state)
        if frame.numeric_rank < expected:
            logger.warning(
                f"Metric rank {frame.numeric_rank} below generic rank {expected}; "
                f"retrying after gauge jitter"
            )
            jittered = _jittered(state, rng)
            return jittered, tangent_frame(jittered, svd_tol)
    return state, frame


def project(
    psi0: np.ndarray,
    init: GKState,
    step: float = 0.5,
    max_iter: int = 500,
    tol: float = 1e-8,
    svd_tol: float = DEFAULT_SVD_TOL,
    strict: bool = False,
) -> ProjectionResult:
    """
    Project a Hilbert state onto the GK manifold through ``init``.

    Iterates ``c <- c + h * g^+ A^dagger (psi0 - psi(c)) / 2``, the explicit
    Euler discretization of the metric gradient flow. A step that does not
    reduce ``|psi0 - psi(c)|`` is rejected and h halved; h doubles after
    five consecutive accepted steps, up to 1. Rows are rebalanced every 50
    iterations.

    Args:
        psi0: Target state (nonzero)
        init: Starting GK state (nonzero)
        step: Initial step size h
        max_iter: Iteration cap
        tol: Stop when the tangential residual ``|P_K(psi0 - psi)|`` falls below this
        svd_tol: Relative cutoff of the metric pseudoinverse
        strict: Raise ConvergenceError instead of returning a flagged result

    Returns:
        ProjectionResult; ``converged`` is False on divergence or the iteration cap

    Raises:
        ValueError: If psi0 or init is zero, or the dimensions differ
        ConvergenceError: If strict and the projection did not converge

    Example:
        >>> state = random_gk_state(order=3, rank=1, d=2, seed=0)
        >>> project(state.evaluate(), state).distance < 1e-12
        True
    """
    # Validate inputs
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    if psi0.shape != (init.dim,):
        raise ValueError(f"Target has length {psi0.size}, GK manifold dimension is {init.dim}")
    if np.linalg.norm(psi0) == 0:
        raise ValueError("Cannot project the zero vector")
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")

    state, frame = safe_frame(init, svd_tol, check_rank=True)
    residual_vec = psi0 - frame.psi
    distance = float(np.linalg.norm(residual_vec))
    best = distance

    step_size = min(step, MAX_STEP)
    streak = 0
    converged = False
    tangential = float('inf')
    iteration = 0

    while True:
        tangential = float(np.linalg.norm(frame.project(residual_vec)))
        if tangential < tol:
            converged = True
            break
        if iteration >= max_iter:
            break

        iteration += 1
        if iteration % BALANCE_EVERY == 0:
            state, frame = safe_frame(state.balanced(), svd_tol)

        direction = frame.pullback(residual_vec)
        trial = state.with_flat(state.flat() + step_size * direction)
        trial_residual = psi0 - evaluate(trial)
        trial_distance = float(np.linalg.norm(trial_residual))

        if not np.isfinite(trial_distance) or trial_distance > DIVERGENCE_FACTOR * best:
            logger.warning(
                f"Projection diverged at iteration {iteration}: "
                f"distance {trial_distance:.3e} vs best {best:.3e}"
            )
            break

        if trial_distance < distance:
            state, frame = safe_frame(trial, svd_tol)
            residual_vec = trial_residual
            distance = best = trial_distance
            streak += 1
            if streak >= GROW_AFTER:
                step_size = min(2 * step_size, MAX_STEP)
                streak = 0
        else:
            step_size /= 2
            streak = 0
            if step_size < MIN_STEP:
                logger.debug(f"Projection stalled at distance {distance:.3e}")
                break

        logger.debug(
            f"Projection iteration {iteration}: distance={distance:.6e}, "
            f"tangential={tangential:.3e}, step={step_size:.3g}"
        )

    if not converged:
        message = (
            f"Projection did not converge after {iteration} iterations "
            f"(tangential residual {tangential:.3e}, tol {tol:.1e})"
        )
        if strict:
            raise ConvergenceError(message)
        logger.warning(message)

    return ProjectionResult(
        gk=state,
        distance=distance,
        fidelity=fidelity(frame.psi, psi0) if np.linalg.norm(frame.psi) > 0 else 0.0,
        iterations=iteration,
        converged=converged,
        residual=tangential,
    )


def project_random(
    psi0: np.ndarray,
    rank: int,
    dims: Sequence[int],
    seed: int,
    n_starts: int = 1,
    **kwargs,
) -> ProjectionResult:
    """
    Cold projection from ``n_starts`` random GK states; returns the closest result.

    Start s uses ``random_gk_state(..., seed=[*seed, s])``; seed may be an int or a list.
    """
    if n_starts < 1:
        raise ValueError(f"n_starts must be positive, got {n_starts}")

    best = None
    for s in range(n_starts):
        init = random_gk_state(len(dims), rank, list(dims), seed=[*np.atleast_1d(seed).tolist(), s])
        result = project(psi0, init, **kwargs)
        if best is None or result.distance < best.distance:
            best = result
    return best


# Projected dynamics -----------------------------------------------------------


def _apply(G, psi: np.ndarray) -> np.ndarray:
    return G @ psi if sparse.issparse(G) else np.asarray(G) @ psi


def tangent_velocity(state: GKState, G, svd_tol: float = DEFAULT_SVD_TOL) -> np.ndarray:
    """
    Coordinate velocity ``g^+ dphi`` with ``phi = <psi|G|psi>/2``.

    Equivalently the least-squares coordinate direction whose image is
    ``P_K G psi``.
    """
    _, frame = safe_frame(state, svd_tol)
    return frame.pullback(_apply(G, frame.psi))


def projected_step(
    state: GKState,
    G,
    dt: float,
    method: str = 'euler',
    svd_tol: float = DEFAULT_SVD_TOL,
) -> GKState:
    """
    One reduced-order update under the generator G.

    ``delta c = (d dbar kappa)^+ dbar phi`` scaled by dt. For ``G = -iH``
    this is the projected Schrodinger step.

    Args:
        state: Current GK state
        G: Generator matrix (dense or sparse) on the full space
        dt: Time step
        method: 'euler' or 'rk4' in coordinate space
        svd_tol: Relative cutoff of the metric pseudoinverse

    Returns:
        Updated GKState

    Raises:
        ValueError: On an unknown method or a generator of the wrong shape
    """
    if method not in INTEGRATORS:
        raise ValueError(f"Unknown integrator '{method}'. Available: {', '.join(INTEGRATORS)}")
    if G.shape != (state.dim, state.dim):
        raise ValueError(f"Generator shape {G.shape} does not match dimension {state.dim}")

    c0 = state.flat()
    if method == 'euler':
        return state.with_flat(c0 + dt * tangent_velocity(state, G, svd_tol))

    def velocity(c):
        return tangent_velocity(state.with_flat(c), G, svd_tol)

    k1 = velocity(c0)
    k2 = velocity(c0 + 0.5 * dt * k1)
    k3 = velocity(c0 + 0.5 * dt * k2)
    k4 = velocity(c0 + dt * k3)
    return state.with_flat(c0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def _normalized(state: GKState) -> GKState:
    return state.scaled(1.0 / np.linalg.norm(evaluate(state)))


def _initial_gk(config: SimulationConfig, rank: int, seed: int, trajectory: int) -> GKState:
    """Rank-r GK state at the configured initial state."""
    dims = list(config.dims)
    init = random_gk_state(len(dims), rank, dims, seed=[seed, trajectory, 1])

    if config.initial_state is None:
        # Default start is the product of m = +j states: put it in row 0
        coeffs = [np.array(c) * 1e-3 for c in init.coeffs]
        for c, d in zip(coeffs, dims):
            c[0] = np.eye(d)[0]
        init = GKState(tuple(coeffs))

    result = project(config.start_state(), init, max_iter=2000, tol=1e-10)
    if not result.converged:
        logger.warning(f"Initial projection at rank {rank} reached distance {result.distance:.3e}")
    return _normalized(result.gk)


def run_projected_trajectory(
    config: SimulationConfig,
    gk_rank: int,
    seed: Optional[int] = None,
    trajectory: int = 0,
    shadow: Optional[bool] = None,
    method: str = 'rk4',
    reproject_iter: int = 50,
    tol: float = 1e-9,
    svd_tol: float = DEFAULT_SVD_TOL,
) -> ProjectedRun:
    """
    Run a trajectory entirely on a rank-``gk_rank`` GK manifold.

    Each step applies a projected Hamiltonian half-step, the measurement
    sweep (branches drawn from the exact branch probabilities of the GK
    state, uniforms from the same stream as run_trajectory), re-projection
    from the previous coefficients, and the second half-step. A shadow
    full-space state driven by the same clicks scores the fidelity at the
    configured sample steps.

    Args:
        config: Simulation configuration; GK factors are the spins in config.dims
        gk_rank: GK rank
        seed: Seed override (default config.seed)
        trajectory: Trajectory index
        shadow: Track a shadow state (default: when dim H <= DENSE_LIMIT)
        method: Integrator for the projected Hamiltonian step
        reproject_iter: Iteration cap of each re-projection
        tol: Tangential residual tolerance of each re-projection
        svd_tol: Relative cutoff of the metric pseudoinverse

    Returns:
        ProjectedRun; steps whose re-projection did not converge are listed
        in ``flagged_steps`` and the run continues from the best iterate

    Raises:
        ValueError: If gk_rank is not positive
        BrokenPairError: On an out-of-range branch probability
    """
    if gk_rank < 1:
        raise ValueError(f"gk_rank must be positive, got {gk_rank}")

    seed = config.seed if seed is None else seed
    draws = trajectory_rng(seed, trajectory).random((config.n_steps, config.n_pairs))
    use_shadow = config.total_dim <= DENSE_LIMIT if shadow is None else shadow

    state = _initial_gk(config, gk_rank, seed, trajectory)
    exact = config.start_state() if use_shadow else None

    H = config.hamiltonian
    G = None
    U_half = None
    if H is not None:
        G = -1j * (sparse.csr_matrix(H) if sparse.issparse(H) else np.asarray(H, dtype=complex))
        if use_shadow:
            U_half = half_step_propagator(config)

    sample_steps = config.sample_steps
    sample_set = {int(s): i for i, s in enumerate(sample_steps)}
    fidelities = np.empty(len(sample_steps)) if use_shadow else None
    if use_shadow:
        fidelities[0] = fidelity(evaluate(state), exact)

    clicks = np.empty((config.n_steps, config.n_pairs), dtype=np.int8)
    flagged: List[int] = []

    for n in range(config.n_steps):
        if G is not None:
            state = _normalized(projected_step(state, G, 0.5 * config.dt, method, svd_tol))
            if exact is not None:
                exact = U_half(exact[None, :])[0]

        psi = evaluate(state)
        psi = psi / np.linalg.norm(psi)
        for k, (site, pair) in enumerate(config.pairs):
            plus = apply_local(pair.m_plus, psi, site, config.dims)
            p_plus = float(np.vdot(plus, plus).real)
            if p_plus < -PROB_TOL or p_plus > 1 + PROB_TOL:
                raise BrokenPairError(f"Pair {k} gave branch probability {p_plus:.12g} at step {n}")

            take_plus = draws[n, k] < p_plus
            op = pair.m_plus if take_plus else pair.m_minus
            psi = plus if take_plus else apply_local(op, psi, site, config.dims)
            psi = psi / np.linalg.norm(psi)
            clicks[n, k] = 1 if take_plus else -1
            if exact is not None:
                exact = apply_local(op, exact, site, config.dims)
                exact = exact / np.linalg.norm(exact)

        result = project(psi, state, max_iter=reproject_iter, tol=tol, svd_tol=svd_tol)
        if not result.converged:
            flagged.append(n)
            logger.debug(f"Step {n}: re-projection residual {result.residual:.3e}")
        state = _normalized(result.gk)

        if G is not None:
            state = _normalized(projected_step(state, G, 0.5 * config.dt, method, svd_tol))
            if exact is not None:
                exact = U_half(exact[None, :])[0]
                exact = exact / np.linalg.norm(exact)

        if use_shadow and n + 1 in sample_set:
            fidelities[sample_set[n + 1]] = fidelity(evaluate(state), exact)

    if flagged:
        logger.warning(f"{len(flagged)} of {config.n_steps} re-projections did not converge")

    filtered = (
        clicks.astype(float)
        if config.filter_tau is None
        else low_pass(clicks.astype(float), config.filter_tau, config.dt)
    )
    record = TrajectoryRecord(
        clicks=clicks,
        filtered=filtered,
        final_state=evaluate(state),
        dt=config.dt,
        sample_times=config.dt * sample_steps,
    )
    return ProjectedRun(
        record=record, gk=state, rank=gk_rank, fidelity=fidelities, flagged_steps=flagged
    )


# Mixing invariance -----------------------------------------------------------


def projected_ensemble_step(
    state: GKState,
    pair: MeasurementPair,
    site: Optional[int] = None,
    svd_tol: float = DEFAULT_SVD_TOL,
) -> np.ndarray:
    """
    Ensemble density matrix after one projected measurement of a GK state.

    Each branch ``M psi`` is restricted to the tangent space at psi and
    renormalized, and the branches are weighted by their exact probabilities:

        ``rho = sum_k P M_k psi psi^dagger M_k^dagger P <M_k^dagger M_k> / <M_k^dagger P M_k>``

    Through second order in epsilon this depends only on the superoperator
    and P, so u_mix'd pairs differ at O(epsilon^3). A pair acting on a single
    spin moves the state along the manifold and the step is exact.

    Args:
        state: GK state
        pair: Measurement pair on one spin (with site) or on the whole space
        site: Spin the pair acts on; None for an operator on the whole space
        svd_tol: Relative cutoff of the metric pseudoinverse

    Returns:
        Density matrix of shape (dim H, dim H)

    Raises:
        ValueError: If a branch with nonzero weight has no tangential part
    """
    _, frame = safe_frame(state, svd_tol)
    psi = frame.psi / np.linalg.norm(frame.psi)
    rho = np.zeros((psi.size, psi.size), dtype=complex)
    for k, op in enumerate(pair.operators()):
        branch = apply_local(op, psi, site, state.factor_dims)
        weight = float(np.vdot(branch, branch).real)
        if weight == 0.0:
            continue
        tangent = frame.project(branch)
        kept = float(np.vdot(tangent, tangent).real)
        if kept <= 1e-14 * weight:
            raise ValueError(f"Branch {k} is normal to the tangent space; the pair is not first class here")
        rho += (weight / kept) * np.outer(tangent, tangent.conj())
    return rho


def mixing_defect(
    state: GKState,
    pair: MeasurementPair,
    U: np.ndarray,
    site: Optional[int] = None,
    svd_tol: float = DEFAULT_SVD_TOL,
) -> float:
    """Frobenius distance between the projected ensemble steps of a pair and of ``u_mix(pair, U)``."""
    before = projected_ensemble_step(state, pair, site, svd_tol)
    after = projected_ensemble_step(state, u_mix(pair, U), site, svd_tol)
    return float(np.linalg.norm(after - before))


# Local quantum metrics --------------------------------------------------------

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _reduced(psi: np.ndarray, n_spin: int, sites: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of the given qubits, in the given order."""
    tensor = np.moveaxis(psi.reshape([2] * n_spin), list(sites), list(range(len(sites))))
    block = tensor.reshape(2 ** len(sites), -1)
    return block @ block.conj().T


def _entropy_bits(rho: np.ndarray) -> float:
    w = np.clip(np.linalg.eigvalsh(rho), 0.0, None)
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))


def _covariance(rho: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Single-qubit Pauli means and symmetrized covariance."""
    means = np.array([np.trace(rho @ s).real for s in _PAULI])
    cov = np.empty((3, 3))
    for a, sa in enumerate(_PAULI):
        for b, sb in enumerate(_PAULI):
            second = 0.5 * np.trace(rho @ (sa @ sb + sb @ sa)).real
            cov[a, b] = second - means[a] * means[b]
    return means, cov


def concurrence(rho_ab: np.ndarray) -> float:
    """Two-qubit concurrence from the spectrum of ``rho (sy x sy) rho* (sy x sy)``."""
    yy = np.kron(_PAULI[1], _PAULI[1])
    flipped = yy @ rho_ab.conj() @ yy
    eig = np.clip(np.linalg.eigvals(rho_ab @ flipped).real, 0.0, None)
    roots = np.sort(np.sqrt(eig))[::-1]
    return float(max(0.0, roots[0] - roots[1:].sum()))


def local_metrics(psi: np.ndarray, pair: Tuple[int, int]) -> Dict:
    """
    Local quantum metrics of two qubits (A, B) of an n-qubit state.

    Args:
        psi: State of length 2**n (normalized internally)
        pair: Qubit indices (A, B), distinct

    Returns:
        Dictionary with ``covariance_a``/``covariance_b`` (3x3 Pauli
        covariances), ``cross_covariance``, ``direction_cosine_a``/``_b``
        (``|<sigma>|``, i.e. ``<s.m>/j``), ``concurrence`` and
        ``mutual_information`` in bits

    Raises:
        ValueError: If len(psi) is not a power of two or the indices are invalid

    Example:
        >>> bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
        >>> round(local_metrics(bell, (0, 1))['mutual_information'], 12)
        2.0
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    n_spin = int(round(np.log2(psi.size))) if psi.size > 0 else 0
    if psi.size < 4 or 2 ** n_spin != psi.size:
        raise ValueError(f"State length {psi.size} is not 2**n with n >= 2")

    a, b = (int(i) for i in pair)
    if a == b or not (0 <= a < n_spin and 0 <= b < n_spin):
        raise ValueError(f"Invalid qubit pair {pair} for {n_spin} qubits")

    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("Local metrics are undefined for the zero vector")
    psi = psi / norm

    rho_ab = _reduced(psi, n_spin, [a, b])
    rho_a = _reduced(psi, n_spin, [a])
    rho_b = _reduced(psi, n_spin, [b])

    mean_a, cov_a = _covariance(rho_a)
    mean_b, cov_b = _covariance(rho_b)
    cross = np.empty((3, 3))
    for i, si in enumerate(_PAULI):
        for k, sk in enumerate(_PAULI):
            cross[i, k] = np.trace(rho_ab @ np.kron(si, sk)).real - mean_a[i] * mean_b[k]

    return {
        'covariance_a': cov_a,
        'covariance_b': cov_b,
        'cross_covariance': cross,
        'direction_cosine_a': float(np.linalg.norm(mean_a)),
        'direction_cosine_b': float(np.linalg.norm(mean_b)),
        'concurrence': concurrence(rho_ab),
        'mutual_information': _entropy_bits(rho_a) + _entropy_bits(rho_b) - _entropy_bits(rho_ab),
    }
