"""
Spin-dust test systems and their projection-fidelity experiments.

A spin dust is a set of spin-1/2 particles with random dipole couplings
and no spatial order. Each spin couples to four randomly drawn partners
plus itself. The experiment harness runs an exact observed trajectory,
projects its states onto GK manifolds of several ranks, and tabulates the
projection fidelities and local quantum metrics.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from ..core.measurement import MeasurementPair, make_pair
from ..core.spin_algebra import make_spin_ops
from .mor import fidelity, local_metrics, project, project_random
from .trajectory import SimulationConfig, run_ensemble, run_trajectory

logger = logging.getLogger(__name__)

MAX_DUST_SPINS = 14
MAX_SHADOW_SPINS = 12
PARTNERS = 4


@dataclass
class DustSystem:
    """
    Random dipole-coupled spin-1/2 system.

    Attributes:
        n_spin: Number of spins
        links: (j, k, n_jk) triples; j == k marks a self link
        hamiltonian: Sparse Hermitian Hamiltonian on 2**n_spin states
        scale: Factor applied to the raw coupling sum
        seed: Seed that generated the links
    """

    n_spin: int
    links: List[Tuple[int, int, Tuple[float, float, float]]]
    hamiltonian: sparse.csr_matrix
    scale: float
    seed: int

    @property
    def dim(self) -> int:
        return 2 ** self.n_spin

    def coupled(self, a: int, b: int) -> bool:
        """Whether spins a and b share a dipole link in either direction."""
        return any({j, k} == {a, b} for j, k, _ in self.links if j != k)

    def get_info(self) -> Dict:
        return {
            'n_spin': self.n_spin,
            'n_links': len(self.links),
            'partners_per_spin': PARTNERS,
            'scale': self.scale,
            'seed': self.seed,
            'link_policy': 'out-degree 4 without replacement, duplicates summed',
        }


def site_operators(n_spin: int, site: int) -> Tuple[sparse.csr_matrix, ...]:
    """Sparse spin-1/2 operators (s1, s2, s3) embedded at ``site``."""
    rep = make_spin_ops(0.5)
    left = sparse.identity(2 ** site, format='csr')
    right = sparse.identity(2 ** (n_spin - site - 1), format='csr')
    return tuple(
        sparse.kron(sparse.kron(left, sparse.csr_matrix(op)), right, format='csr')
        for op in rep.ops
    )


def _random_direction(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def build_dust(n_spin: int, seed: int, normalize: bool = True) -> DustSystem:
    """
    Build a spin dust.

    ``H_jk = s_j . (I - 3 n n^T) . s_k`` for j != k and ``s_j . n_jj`` for
    self links. Each spin draws min(4, n_spin - 1) distinct partners and one
    self link; every link has its own uniformly random direction. With
    ``normalize`` the sum is rescaled so that ``tr H^2 / dim H = n_spin``.

    Args:
        n_spin: Number of spins, 1..MAX_DUST_SPINS
        seed: Seed of the link and direction draws
        normalize: Rescale to unit energy variance per spin

    Returns:
        DustSystem

    Raises:
        ValueError: If n_spin is out of range

    Example:
        >>> dust = build_dust(3, seed=1)
        >>> round(dust.hamiltonian.diagonal().sum().real, 9)
        0.0
    """
    # Validate inputs
    if not 1 <= n_spin <= MAX_DUST_SPINS:
        raise ValueError(f"n_spin must be in [1, {MAX_DUST_SPINS}], got {n_spin}")

    rng = np.random.default_rng([seed, n_spin])
    ops = [site_operators(n_spin, site) for site in range(n_spin)]
    n_partners = min(PARTNERS, n_spin - 1)

    links = []
    H = sparse.csr_matrix((2 ** n_spin, 2 ** n_spin), dtype=complex)
    for j in range(n_spin):
        n_self = _random_direction(rng)
        links.append((j, j, tuple(n_self)))
        H = H + sum(n_self[a] * ops[j][a] for a in range(3))

        others = [k for k in range(n_spin) if k != j]
        partners = rng.choice(others, size=n_partners, replace=False) if n_partners else []
        for k in partners:
            k = int(k)
            n_jk = _random_direction(rng)
            M = np.eye(3) - 3.0 * np.outer(n_jk, n_jk)
            links.append((j, k, tuple(n_jk)))
            H = H + sum(M[a, b] * (ops[j][a] @ ops[k][b]) for a in range(3) for b in range(3))

    H = sparse.csr_matrix(0.5 * (H + H.conj().T))
    scale = 1.0
    if normalize:
        trace_sq = float(np.sum(np.abs(H.data) ** 2))
        scale = float(np.sqrt(n_spin * 2 ** n_spin / trace_sq))
        H = H * scale

    logger.info(f"Built spin dust: {n_spin} spins, {len(links)} links, scale {scale:.4f}")
    return DustSystem(n_spin=n_spin, links=links, hamiltonian=H.tocsr(), scale=scale, seed=seed)


def dust_pairs(n_spin: int, tuning: str, theta: float) -> List[Tuple[int, MeasurementPair]]:
    """Triaxial per-spin spinometers: pairs along x, y, z at every site."""
    rep = make_spin_ops(0.5)
    return [
        (site, make_pair(rep, tuning, theta, axis=axis))
        for site in range(n_spin)
        for axis in (1, 2, 3)
    ]


@dataclass
class DustExperimentResult:
    """Fidelity table of a spin-dust projection experiment."""

    n_spin: int
    tuning: str
    ranks: List[int]
    sample_times: np.ndarray
    fidelities: Dict[int, np.ndarray]
    converged: Dict[int, np.ndarray] = field(default_factory=dict)
    metrics: List[Dict] = field(default_factory=list)
    system_info: Dict = field(default_factory=dict)

    def median_fidelity(self) -> Dict[int, float]:
        return {rank: float(np.median(f)) for rank, f in self.fidelities.items()}

    def converged_flags(self, rank: int) -> np.ndarray:
        return self.converged.get(rank, np.ones(len(self.sample_times), dtype=bool))

    @property
    def all_converged(self) -> bool:
        return all(bool(np.all(self.converged_flags(rank))) for rank in self.ranks)

    def rows(self) -> List[Dict]:
        """Rows (n_spin, rank, tuning, sample_time, fidelity, converged)."""
        return [
            {
                'n_spin': self.n_spin,
                'rank': rank,
                'tuning': self.tuning,
                'sample_time': float(t),
                'fidelity': float(f),
                'converged': bool(c),
            }
            for rank in self.ranks
            for t, f, c in zip(self.sample_times, self.fidelities[rank], self.converged_flags(rank))
        ]


def _metric_rows(
    system: DustSystem,
    exact: np.ndarray,
    projected: np.ndarray,
    rank: int,
    time: float,
    rng: np.random.Generator,
    n_pairs: int,
) -> List[Dict]:
    rows = []
    for _ in range(n_pairs):
        a, b = (int(i) for i in rng.choice(system.n_spin, size=2, replace=False))
        m_exact = local_metrics(exact, (a, b))
        m_proj = local_metrics(projected, (a, b))
        rows.append({
            'rank': rank,
            'time': time,
            'spin_a': a,
            'spin_b': b,
            'coupled': system.coupled(a, b),
            'direction_cosine_exact': m_exact['direction_cosine_a'],
            'direction_cosine_projected': m_proj['direction_cosine_a'],
            'covariance_trace_exact': float(np.trace(m_exact['covariance_a'])),
            'covariance_trace_projected': float(np.trace(m_proj['covariance_a'])),
            'concurrence_exact': m_exact['concurrence'],
            'concurrence_projected': m_proj['concurrence'],
            'mutual_information_exact': m_exact['mutual_information'],
            'mutual_information_projected': m_proj['mutual_information'],
        })
    return rows


def run_dust_experiment(
    n_spin: int,
    ranks: Sequence[int],
    tuning: str = 'synoptic',
    seed: int = 0,
    t_burn: float = 100.0,
    n_samples: int = 30,
    dt: float = 0.1,
    theta: float = 0.1,
    spacing: float = 1.0,
    metric_pairs: int = 0,
    max_iter: int = 500,
) -> DustExperimentResult:
    """
    Project an exact spin-dust trajectory onto GK manifolds of several ranks.

    Every spin carries a triaxial spinometer (T1 = dt/theta^2 = 10 by
    default). The exact trajectory starts from a random state, runs past
    ``t_burn`` and is sampled ``n_samples`` times, ``spacing`` apart. Each
    sample is projected at each rank; the first sample from a random start,
    later ones warm-started from the previous projection.

    Args:
        n_spin: Number of spins, at most MAX_SHADOW_SPINS
        ranks: GK ranks to test
        tuning: Pair tuning of the spinometers
        seed: Seed of the dust, the trajectory and the projections
        t_burn: Time before the first sample
        n_samples: Number of projected samples
        dt: Time step
        theta: Spinometer coupling
        spacing: Time between samples
        metric_pairs: Random spin pairs scored by local metrics per sample
        max_iter: Projection iteration cap

    Returns:
        DustExperimentResult

    Raises:
        ValueError: If n_spin exceeds the exact-simulation cap or ranks is empty
    """
    # Validate inputs
    if not 1 <= n_spin <= MAX_SHADOW_SPINS:
        raise ValueError(f"n_spin must be in [1, {MAX_SHADOW_SPINS}] for exact trajectories, got {n_spin}")
    if not ranks or min(ranks) < 1:
        raise ValueError(f"ranks must be a nonempty list of positive integers, got {ranks}")
    if n_samples < 1 or spacing <= 0 or t_burn < 0:
        raise ValueError(f"Invalid sampling: n_samples={n_samples}, spacing={spacing}, t_burn={t_burn}")

    system = build_dust(n_spin, seed)
    rng = np.random.default_rng([seed, n_spin, 2])
    start = rng.standard_normal(system.dim) + 1j * rng.standard_normal(system.dim)
    start /= np.linalg.norm(start)

    stride = max(1, int(round(spacing / dt)))
    first = int(np.ceil(t_burn / dt)) + stride
    n_steps = first + (n_samples - 1) * stride
    config = SimulationConfig(
        dims=[2] * n_spin,
        pairs=dust_pairs(n_spin, tuning, theta),
        dt=dt,
        n_steps=n_steps,
        seed=seed,
        hamiltonian=system.hamiltonian,
        initial_state=start,
        sample_every=stride,
    )
    logger.info(f"Spin dust {n_spin} ({tuning}): {n_steps} steps, {n_samples} samples, ranks {list(ranks)}")

    ensemble = run_ensemble(config, n_traj=1, keep_states=True)
    steps = config.sample_steps
    chosen = np.nonzero(steps * dt > t_burn)[0][-n_samples:]
    states = ensemble.states[chosen, 0]
    times = steps[chosen] * dt

    fidelities: Dict[int, np.ndarray] = {}
    converged: Dict[int, np.ndarray] = {}
    metrics: List[Dict] = []
    dims = config.dims
    for rank in ranks:
        values = np.empty(len(states))
        flags = np.ones(len(states), dtype=bool)
        gk = None
        for i, psi in enumerate(states):
            if gk is None:
                result = project_random(psi, rank, dims, seed=[seed, rank], max_iter=max_iter)
            else:
                result = project(psi, gk, max_iter=max_iter)
            gk = result.gk
            values[i] = fidelity(result.psi, psi)
            flags[i] = result.converged
            if metric_pairs and n_spin >= 2:
                metrics.extend(
                    _metric_rows(system, psi, result.psi, rank, float(times[i]), rng, metric_pairs)
                )
        fidelities[int(rank)] = values
        converged[int(rank)] = flags
        logger.info(f"Rank {rank}: median fidelity {np.median(values):.4f}")

    return DustExperimentResult(
        n_spin=n_spin,
        tuning=tuning,
        ranks=[int(r) for r in ranks],
        sample_times=times,
        fidelities=fidelities,
        converged=converged,
        metrics=metrics,
        system_info=system.get_info(),
    )


def dust_state(
    n_spin: int,
    seed: int,
    tuning: str = 'synoptic',
    duration: float = 20.0,
    dt: float = 0.1,
    theta: float = 0.1,
) -> np.ndarray:
    """Final state of an exact spin-dust trajectory from a random start."""
    if not 1 <= n_spin <= MAX_SHADOW_SPINS:
        raise ValueError(f"n_spin must be in [1, {MAX_SHADOW_SPINS}] for exact trajectories, got {n_spin}")

    system = build_dust(n_spin, seed)
    rng = np.random.default_rng([seed, n_spin, 2])
    start = rng.standard_normal(system.dim) + 1j * rng.standard_normal(system.dim)
    config = SimulationConfig(
        dims=[2] * n_spin,
        pairs=dust_pairs(n_spin, tuning, theta),
        dt=dt,
        n_steps=int(np.ceil(duration / dt)),
        seed=seed,
        hamiltonian=system.hamiltonian,
        initial_state=start / np.linalg.norm(start),
    )
    return run_trajectory(config).final_state
