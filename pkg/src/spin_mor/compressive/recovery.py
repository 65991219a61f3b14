"""
Restricted isometry, sparse selection and compressed projection.

RIP reports scan S-column subsets of a sampling matrix and record the
isometry constant ``delta_S = max(1 - lambda_min, lambda_max - 1)`` of each
subset Gram matrix. Sparse selection solves the basis-pursuit, LASSO and
Dantzig forms with one accelerated iterative-shrinkage solver. Compressed
projection fits a GK state to random projections ``X psi0`` of a state,
and breakdown sweeps map its fidelity against the number of projections.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import pinvh

from ..core.gk_manifold import DEFAULT_SVD_TOL, DENSE_LIMIT, GKState, evaluate, jacobian, random_gk_state
from ..processing.mor import BALANCE_EVERY, DIVERGENCE_FACTOR, GROW_AFTER, MAX_STEP, MIN_STEP, ProjectionResult, fidelity
from ..utils.validation import ConvergenceError
from .dictionary import SamplingDictionary, as_matrix, gaussian_dictionary

logger = logging.getLogger(__name__)

MAX_EXHAUSTIVE_SUBSETS = 10 ** 6
SUBSET_CHUNK = 4096
FORMS = ('bpdn', 'lasso', 'dantzig')
MAX_SHRINKAGE_ITER = 10_000

Dictionary = Union[SamplingDictionary, np.ndarray]


# Restricted isometry -----------------------------------------------------------


@dataclass
class RipReport:
    """
    Isometry constants of the S-column subsets of a sampling matrix.

    A subset passes when ``0 <= delta_S < 1``; unit-norm columns give
    ``delta_1 = 0``.
    """

    sparsity: int
    n_subsets: int
    n_pass: int
    delta_min: float
    delta_max: float
    lambda_min: float
    lambda_max: float
    mode: str

    @property
    def fraction(self) -> float:
        return self.n_pass / self.n_subsets if self.n_subsets else 0.0

    def to_dict(self) -> Dict:
        return {
            'sparsity': self.sparsity,
            'n_subsets': self.n_subsets,
            'fraction': self.fraction,
            'delta_min': self.delta_min,
            'delta_max': self.delta_max,
            'lambda_min': self.lambda_min,
            'lambda_max': self.lambda_max,
            'mode': self.mode,
        }


def _subset_chunks(p: int, S: int, mode: str, n_samples: int, seed) -> List[np.ndarray]:
    if mode == 'exhaustive':
        combos = itertools.combinations(range(p), S)
        chunks = []
        while True:
            block = list(itertools.islice(combos, SUBSET_CHUNK))
            if not block:
                return chunks
            chunks.append(np.array(block, dtype=np.int64))

    rng = np.random.default_rng(seed)
    subsets = np.array([rng.choice(p, size=S, replace=False) for _ in range(n_samples)], dtype=np.int64)
    return [subsets[i:i + SUBSET_CHUNK] for i in range(0, n_samples, SUBSET_CHUNK)]


def _scan(gram: np.ndarray, subsets: np.ndarray) -> Tuple[int, float, float, float, float]:
    blocks = gram[subsets[:, :, None], subsets[:, None, :]]
    eig = np.linalg.eigvalsh(blocks)
    lam_min, lam_max = eig[:, 0], eig[:, -1]
    delta = np.maximum(1.0 - lam_min, lam_max - 1.0)
    n_pass = int(np.count_nonzero((delta >= 0.0) & (delta < 1.0)))
    return n_pass, float(delta.min()), float(delta.max()), float(lam_min.min()), float(lam_max.max())


def rip_report(
    X: Dictionary,
    sparsity: int,
    mode: str = 'exhaustive',
    n_samples: int = 1000,
    seed=None,
    workers: int = 1,
) -> RipReport:
    """
    Restricted-isometry statistics of a sampling matrix at one sparsity.

    Args:
        X: Sampling matrix or dictionary of shape (n, p)
        sparsity: Subset size S
        mode: 'exhaustive' (all C(p, S) subsets) or 'sampled'
        n_samples: Random subsets in sampled mode
        seed: Seed of the sampled subsets
        workers: Threads scanning subset chunks

    Returns:
        RipReport

    Raises:
        ValueError: If S is out of range, the mode is unknown or an exhaustive
            scan would exceed MAX_EXHAUSTIVE_SUBSETS subsets

    Example:
        >>> from spin_mor.compressive.dictionary import build_dictionary
        >>> rip_report(build_dictionary(3, 'parity'), 2).fraction
        1.0
    """
    # Validate inputs
    Xm = as_matrix(X)
    p = Xm.shape[1]
    if not 1 <= sparsity <= p:
        raise ValueError(f"Sparsity must be in [1, {p}], got {sparsity}")
    if mode not in ('exhaustive', 'sampled'):
        raise ValueError(f"Unknown RIP mode '{mode}'. Available: exhaustive, sampled")

    if mode == 'exhaustive':
        n_subsets = comb(p, sparsity)
        if n_subsets > MAX_EXHAUSTIVE_SUBSETS:
            raise ValueError(
                f"Exhaustive scan needs C({p}, {sparsity}) = {n_subsets} subsets, "
                f"above the limit of {MAX_EXHAUSTIVE_SUBSETS}; use mode='sampled'"
            )
    elif n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")

    gram = Xm.conj().T @ Xm
    chunks = _subset_chunks(p, sparsity, mode, n_samples, seed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _scan(gram, c), chunks))
    else:
        parts = [_scan(gram, c) for c in chunks]

    report = RipReport(
        sparsity=sparsity,
        n_subsets=int(sum(len(c) for c in chunks)),
        n_pass=sum(part[0] for part in parts),
        delta_min=min(part[1] for part in parts),
        delta_max=max(part[2] for part in parts),
        lambda_min=min(part[3] for part in parts),
        lambda_max=max(part[4] for part in parts),
        mode=mode,
    )
    logger.debug(f"RIP S={sparsity}: {report.n_pass}/{report.n_subsets} pass, delta in [{report.delta_min:.3f}, {report.delta_max:.3f}]")
    return report


def gaussian_rip_median(
    n: int,
    p: int,
    sparsity: int,
    n_matrices: int = 11,
    seed: int = 0,
    mode: str = 'exhaustive',
    n_samples: int = 1000,
) -> float:
    """Median RIP pass fraction over ``n_matrices`` real Gaussian n x p matrices."""
    fractions = [
        rip_report(gaussian_dictionary(n, p, seed=[seed, m]), sparsity, mode, n_samples, seed=[seed, m]).fraction
        for m in range(n_matrices)
    ]
    return float(np.median(fractions))


# Sparse selection --------------------------------------------------------------


@dataclass
class SparseSolution:
    """
    Solution of a sparse-selection problem.

    Attributes:
        coefficients: Coefficient vector w of length p
        form: 'bpdn', 'lasso' or 'dantzig'
        lam: Regularization parameter
        iterations: Shrinkage iterations used
        converged: Whether the iterate change fell below tolerance
        residual_norm: ``|y - X w|``
        certificate: ``|X^dagger (y - X w)|_inf``
    """

    coefficients: np.ndarray
    form: str
    lam: float
    iterations: int
    converged: bool
    residual_norm: float
    certificate: float

    @property
    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    @property
    def slack(self) -> float:
        """``lam - certificate``; nonnegative when the Dantzig constraint holds."""
        return self.lam - self.certificate

    def support(self, tol: float = 1e-8) -> np.ndarray:
        return np.flatnonzero(np.abs(self.coefficients) > tol)


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    """
    Complex soft threshold: shrink magnitudes by ``threshold``, keep phases.

    Example:
        >>> soft_threshold(np.array([3.0, -0.5, -2.0]), 1.0)
        array([ 2., -0., -1.])
    """
    mag = np.abs(v)
    scale = np.maximum(1.0 - threshold / np.where(mag > 0, mag, 1.0), 0.0)
    return v * scale


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{w : |w|_1 <= radius}``, phases kept."""
    mag = np.abs(v)
    if mag.sum() <= radius:
        return v.copy()
    u = np.sort(mag)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u - (css - radius) / k > 0)[0][-1]
    shift = (css[rho] - radius) / (rho + 1)
    return soft_threshold(v, shift)


def _operators(X: Dictionary) -> Tuple[Callable, Callable, int, float]:
    if isinstance(X, SamplingDictionary):
        return X.matvec, X.rmatvec, X.n_cols, X.spectral_norm()
    Xm = np.asarray(X)
    return (lambda w: Xm @ w), (lambda y: Xm.conj().T @ y), Xm.shape[1], float(np.linalg.norm(Xm, 2))


def sparse_select(
    y: np.ndarray,
    X: Dictionary,
    lam: float,
    form: str = 'bpdn',
    max_iter: int = MAX_SHRINKAGE_ITER,
    tol: float = 1e-10,
) -> SparseSolution:
    """
    Sparse coefficients w with ``X w ~ y``.

    Forms:
        - bpdn: minimize ``|y - X w|^2 / 2 + lam |w|_1``
        - lasso: minimize ``|y - X w|^2`` subject to ``|w|_1 <= lam``
        - dantzig: the bpdn minimizer, whose optimality conditions make it
          feasible for ``|X^dagger (y - X w)|_inf <= lam``; the certificate
          and slack report the constraint

    All forms run accelerated iterative shrinkage (FISTA) with step
    ``1 / |X|^2``; products go through the dictionary, never a dense X.

    Args:
        y: Samples of length n
        X: Sampling matrix or dictionary of shape (n, p)
        lam: Regularization parameter (l1 radius for lasso)
        form: One of FORMS
        max_iter: Iteration cap
        tol: Relative iterate-change tolerance

    Returns:
        SparseSolution

    Raises:
        ValueError: If the form is unknown, lam is negative or y has the wrong length
        ConvergenceError: If the iteration cap is reached
    """
    # Validate inputs
    if form not in FORMS:
        raise ValueError(f"Unknown form '{form}'. Available: {', '.join(FORMS)}")
    if not lam >= 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")

    matvec, rmatvec, p, norm = _operators(X)
    y = np.asarray(y, dtype=complex).ravel()
    n = X.n_rows if isinstance(X, SamplingDictionary) else np.asarray(X).shape[0]
    if y.size != n:
        raise ValueError(f"Sample vector has length {y.size}, dictionary has {n} rows")
    if norm == 0:
        raise ValueError("Dictionary is zero")

    step = 1.0 / norm ** 2
    if form == 'lasso':
        prox = lambda v: project_l1_ball(v, lam)
    else:
        prox = lambda v: soft_threshold(v, lam * step)

    w = np.zeros(p, dtype=complex)
    z = w.copy()
    t = 1.0
    converged = False
    iteration = 0
    while iteration < max_iter:
        iteration += 1
        w_new = prox(z - step * rmatvec(matvec(z) - y))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        change = np.linalg.norm(w_new - w)
        w, t = w_new, t_new
        if change <= tol * max(1.0, np.linalg.norm(w)):
            converged = True
            break

    if not converged:
        raise ConvergenceError(f"Iterative shrinkage ({form}) did not converge in {max_iter} iterations")

    residual = y - matvec(w)
    certificate = float(np.max(np.abs(rmatvec(residual))))
    logger.debug(f"Sparse select ({form}, lam={lam:g}): {iteration} iterations, support {np.count_nonzero(w)}")
    return SparseSolution(
        coefficients=w,
        form=form,
        lam=float(lam),
        iterations=iteration,
        converged=converged,
        residual_norm=float(np.linalg.norm(residual)),
        certificate=certificate,
    )


# Compressed projection ---------------------------------------------------------


def sparse_project(
    psi0: Optional[np.ndarray],
    X: Dictionary,
    init: GKState,
    observed: Optional[np.ndarray] = None,
    step: float = 1.0,
    max_iter: int = 500,
    tol: float = 1e-8,
    svd_tol: float = DEFAULT_SVD_TOL,
) -> ProjectionResult:
    """
    Fit a GK state to random projections of a state.

    Minimizes ``|phi0 - X psi(c)|^2`` with ``phi0 = X psi0`` by the
    Gauss-Newton iteration ``c <- c + h (B^dagger B)^+ B^dagger (phi0 - X psi(c))``
    with ``B = X A``, using the same step control as full projection. With
    X the identity this is the full projection.

    Args:
        psi0: Held-out state (None when only ``observed`` is known)
        X: Sampling matrix of shape (n, dim H)
        init: Starting GK state
        observed: Samples phi0; defaults to ``X psi0``
        step: Initial step size
        max_iter: Iteration cap
        tol: Stop when the sample-space tangential residual falls below this
        svd_tol: Relative cutoff of the pseudoinverse

    Returns:
        ProjectionResult; distance is measured in sample space, fidelity
        against psi0 (NaN without psi0)

    Raises:
        ValueError: If shapes disagree, neither psi0 nor observed is given,
            or dim H exceeds the dense Jacobian limit
    """
    # Validate inputs
    Xm = as_matrix(X)
    if Xm.shape[1] != init.dim:
        raise ValueError(f"Sampling matrix has {Xm.shape[1]} columns, GK manifold dimension is {init.dim}")
    if init.dim > DENSE_LIMIT:
        raise ValueError(f"Compressed projection needs dim H <= {DENSE_LIMIT}, got {init.dim}")
    if observed is None:
        if psi0 is None:
            raise ValueError("Need psi0 or observed samples")
        observed = Xm @ np.asarray(psi0, dtype=complex).ravel()
    phi0 = np.asarray(observed, dtype=complex).ravel()
    if phi0.size != Xm.shape[0]:
        raise ValueError(f"Observed samples have length {phi0.size}, expected {Xm.shape[0]}")

    state = init
    residual = phi0 - Xm @ evaluate(state)
    distance = best = float(np.linalg.norm(residual))
    step_size = min(step, MAX_STEP)
    streak = 0
    converged = False
    tangential = float('inf')
    iteration = 0

    while True:
        B = Xm @ jacobian(state)
        direction = pinvh(B.conj().T @ B, rtol=svd_tol) @ (B.conj().T @ residual)
        tangential = float(np.linalg.norm(B @ direction))
        if tangential < tol:
            converged = True
            break
        if iteration >= max_iter:
            break

        iteration += 1
        trial = state.with_flat(state.flat() + step_size * direction)
        trial_residual = phi0 - Xm @ evaluate(trial)
        trial_distance = float(np.linalg.norm(trial_residual))

        if not np.isfinite(trial_distance) or trial_distance > DIVERGENCE_FACTOR * best:
            logger.warning(f"Compressed projection diverged at iteration {iteration}")
            break

        if trial_distance < distance:
            state, residual = trial, trial_residual
            distance = best = trial_distance
            streak += 1
            if streak >= GROW_AFTER:
                step_size = min(2 * step_size, MAX_STEP)
                streak = 0
        else:
            step_size /= 2
            streak = 0
            if step_size < MIN_STEP:
                break

        if iteration % BALANCE_EVERY == 0:
            state = state.balanced()

    if not converged:
        logger.warning(
            f"Compressed projection did not converge after {iteration} iterations "
            f"(residual {tangential:.3e})"
        )

    psi = evaluate(state)
    fid = float('nan')
    if psi0 is not None and np.linalg.norm(psi) > 0:
        fid = fidelity(psi, psi0)
    return ProjectionResult(
        gk=state,
        distance=distance,
        fidelity=fid,
        iterations=iteration,
        converged=converged,
        residual=tangential,
    )


def sampling_bound(rank: int, dim: int) -> Tuple[float, float]:
    """
    Sparsity and sampling bound of a GK manifold.

    ``S = rank (1 + log2 dim)`` and ``n_sb = S ln(dim / S)``.

    Example:
        >>> S, n_sb = sampling_bound(5, 2048)
        >>> S, round(n_sb)
        (60.0, 212)
    """
    if rank < 1 or dim < 2:
        raise ValueError(f"Need rank >= 1 and dim >= 2, got rank={rank}, dim={dim}")
    S = rank * (1.0 + np.log2(dim))
    return float(S), float(S * np.log(dim / S))


@dataclass
class BreakdownSweep:
    """Compressed-projection fidelity against the number of projections."""

    rank: int
    sparsity: float
    bound: float
    n_values: List[int]
    rows: List[Dict] = field(default_factory=list)

    def median_fidelity(self) -> Dict[int, float]:
        return {
            n: float(np.median([r['fidelity'] for r in self.rows if r['n'] == n]))
            for n in self.n_values
        }

    @property
    def all_converged(self) -> bool:
        return all(r['converged'] for r in self.rows)

    def transition(self) -> Optional[float]:
        medians = self.median_fidelity()
        return transition_point(self.n_values, [medians[n] for n in self.n_values])


def transition_point(n_values: Sequence[float], fidelities: Sequence[float]) -> Optional[float]:
    """
    Where a fidelity curve first crosses halfway between its extremes.

    Linear interpolation between sweep points; None when the curve is flat.

    Example:
        >>> transition_point([10, 20, 30], [0.0, 0.5, 1.0])
        20.0
    """
    n = np.asarray(n_values, dtype=float)
    f = np.asarray(fidelities, dtype=float)
    order = np.argsort(n)
    n, f = n[order], f[order]
    lo, hi = f.min(), f.max()
    if hi - lo <= 0:
        return None
    half = 0.5 * (lo + hi)
    above = np.flatnonzero(f >= half)
    k = above[0]
    if k == 0:
        return float(n[0])
    return float(n[k - 1] + (half - f[k - 1]) * (n[k] - n[k - 1]) / (f[k] - f[k - 1]))


def breakdown_sweep(
    psi0: np.ndarray,
    gk_rank: int,
    n_values: Sequence[int],
    seeds: Sequence[int],
    dims: Sequence[int],
    max_iter: int = 200,
    workers: int = 1,
) -> BreakdownSweep:
    """
    Compressed-projection fidelity for a range of projection counts.

    For each (n, seed) a complex Gaussian n x dim H matrix (seed ``[seed, n]``)
    samples psi0 and a rank-``gk_rank`` GK state (seed ``[seed, gk_rank]``) is
    fitted to the samples.

    Args:
        psi0: Target state
        gk_rank: GK rank of the fit
        n_values: Projection counts, ideally spanning the sampling bound
        seeds: Seeds per point
        dims: Local dimensions of the spins
        max_iter: Iteration cap per fit
        workers: Threads over sweep points

    Returns:
        BreakdownSweep with rows (rank, n, seed, fidelity, converged, bound)
    """
    # Validate inputs
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    D = int(np.prod(dims))
    if psi0.size != D:
        raise ValueError(f"Target has length {psi0.size}, dims give {D}")
    if not n_values or min(n_values) < 1:
        raise ValueError(f"n_values must be positive, got {n_values}")

    S, bound = sampling_bound(gk_rank, D)
    logger.info(f"Breakdown sweep: rank {gk_rank}, S = {S:.0f}, sampling bound {bound:.1f}")

    def point(args):
        n, seed = args
        X = gaussian_dictionary(int(n), D, seed=[seed, int(n)], is_complex=True)
        init = random_gk_state(len(dims), gk_rank, list(dims), seed=[seed, gk_rank])
        result = sparse_project(psi0, X, init, max_iter=max_iter)
        return {
            'rank': gk_rank, 'n': int(n), 'seed': int(seed), 'fidelity': result.fidelity,
            'converged': result.converged, 'bound': bound,
        }

    jobs = [(n, seed) for n in n_values for seed in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(point, jobs))
    else:
        rows = [point(job) for job in jobs]

    return BreakdownSweep(rank=gk_rank, sparsity=S, bound=bound, n_values=[int(n) for n in n_values], rows=rows)
