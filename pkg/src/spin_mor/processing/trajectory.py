"""
Stochastic trajectory engine.

Evolves full-Hilbert-space states by alternating Hamiltonian half-steps
with measurement sweeps (Strang splitting). Each measurement pair
contributes one binary click per step. Ensembles distribute independent
trajectories across worker threads; every trajectory owns a random stream
keyed by (seed, trajectory index), so results do not depend on the worker
count or the batching.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.signal import lfilter
from scipy.sparse.linalg import expm_multiply

from ..core.measurement import PlacedPair, apply_local, embed_operator, place_pairs
from ..core.spin_algebra import SpinRep
from ..utils.validation import BrokenPairError

logger = logging.getLogger(__name__)

PROB_TOL = 1e-10
EXPM_DENSE_LIMIT = 1024
RHO_MAX_DIM = 256
STEP_BLOCK = 256
TRACKER_KINDS = ('uniaxial_variance', 'triaxial_covariance')

Operator = Union[np.ndarray, sparse.spmatrix]


def trajectory_rng(seed: int, trajectory: int) -> np.random.Generator:
    """Random stream of one trajectory; step n, pair k reads uniform n * n_pairs + k."""
    return np.random.default_rng([int(seed), int(trajectory)])


@dataclass
class SimulationConfig:
    """
    Configuration of a trajectory simulation.

    Attributes:
        dims: Local Hilbert dimension of each spin
        pairs: (spin index, MeasurementPair) tuples, applied in this order
        dt: Time step in seconds
        n_steps: Number of steps
        seed: Base seed of all random streams
        hamiltonian: Optional dense or sparse Hamiltonian on the full space
        filter_tau: Low-pass time constant for the click streams (None: unfiltered)
        initial_state: Optional initial state (default: every spin at m = +j)
        observables: Named full-space operators sampled along the way
        sample_every: Sampling stride in steps (None: about 100 samples)
    """

    dims: Sequence[int]
    pairs: Sequence[PlacedPair]
    dt: float
    n_steps: int
    seed: int = 0
    hamiltonian: Optional[Operator] = None
    filter_tau: Optional[float] = None
    initial_state: Optional[np.ndarray] = None
    observables: Dict[str, Operator] = field(default_factory=dict)
    sample_every: Optional[int] = None

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        if not self.dims or min(self.dims) < 1:
            raise ValueError(f"dims must be positive integers, got {self.dims}")

        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps}")
        if self.filter_tau is not None and not self.filter_tau > 0:
            raise ValueError(f"filter_tau must be positive, got {self.filter_tau}")

        self.pairs = place_pairs(self.pairs)
        for index, (site, pair) in enumerate(self.pairs):
            expected = self.total_dim if site is None else None
            if site is not None:
                if not 0 <= site < len(self.dims):
                    raise ValueError(f"Pair {index} placed at site {site}, outside {len(self.dims)} spins")
                expected = self.dims[site]
            if pair.dim != expected:
                raise ValueError(
                    f"Pair {index} has dimension {pair.dim}, site dimension is {expected}"
                )
            defect = pair.completeness_defect()
            if defect > 1e-10:
                raise ValueError(f"Pair {index} violates completeness (defect {defect:.3e})")

        D = self.total_dim
        if self.hamiltonian is not None and self.hamiltonian.shape != (D, D):
            raise ValueError(
                f"Hamiltonian shape {self.hamiltonian.shape} does not match Hilbert dimension {D}"
            )
        for name, op in self.observables.items():
            if op.shape != (D, D):
                raise ValueError(f"Observable '{name}' has shape {op.shape}, expected {(D, D)}")

        if self.initial_state is not None:
            psi = np.asarray(self.initial_state, dtype=complex).ravel()
            if psi.shape != (D,):
                raise ValueError(f"Initial state has length {psi.size}, expected {D}")
            norm = np.linalg.norm(psi)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"Initial state must be normalized, |psi| = {norm:.12g}")
            self.initial_state = psi

        if self.sample_every is None:
            self.sample_every = max(1, self.n_steps // 100)
        elif self.sample_every < 1:
            raise ValueError(f"sample_every must be positive, got {self.sample_every}")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def sample_steps(self) -> np.ndarray:
        """Step indices at which states and observables are sampled, 0 included."""
        steps = np.arange(0, self.n_steps + 1, self.sample_every)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps

    def start_state(self) -> np.ndarray:
        if self.initial_state is not None:
            return self.initial_state.copy()
        psi = np.zeros(self.total_dim, dtype=complex)
        psi[0] = 1.0
        return psi

    def get_info(self) -> Dict:
        return {
            'dims': list(self.dims),
            'n_pairs': self.n_pairs,
            'tunings': [pair.tuning for _, pair in self.pairs],
            'dt': self.dt,
            'n_steps': self.n_steps,
            'seed': self.seed,
            'has_hamiltonian': self.hamiltonian is not None,
            'filter_tau': self.filter_tau,
        }


@dataclass
class TrajectoryRecord:
    """Binary click streams and final state of one trajectory."""

    clicks: np.ndarray
    filtered: np.ndarray
    final_state: np.ndarray
    dt: float
    sample_times: np.ndarray
    observables: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.clicks.shape[0] + 1)

    def rows(self) -> Iterator[Tuple[float, int, int, float]]:
        """CSV rows (time, pair_id, click, filtered)."""
        times = self.times
        for n in range(self.clicks.shape[0]):
            for k in range(self.clicks.shape[1]):
                yield float(times[n]), k, int(self.clicks[n, k]), float(self.filtered[n, k])


@dataclass
class EnsembleResult:
    """
    Ensemble statistics of independent trajectories.

    ``rho_t`` holds the sampled ensemble density matrices when the Hilbert
    space is small enough; ``states`` holds per-trajectory snapshots with
    shape (n_samples, n_traj, D) when requested.
    """

    n_traj: int
    sample_times: np.ndarray
    rho_t: Optional[np.ndarray]
    observable_means: Dict[str, np.ndarray]
    observable_vars: Dict[str, np.ndarray]
    click_means: np.ndarray
    click_vars: np.ndarray
    states: Optional[np.ndarray] = None

    def stderr(self, name: str) -> np.ndarray:
        """Monte-Carlo standard error of an observable mean."""
        return np.sqrt(self.observable_vars[name] / self.n_traj)


# Single steps -----------------------------------------------------------------


def measurement_sweep(
    states: np.ndarray,
    pairs: Sequence[PlacedPair],
    uniforms: np.ndarray,
    dims: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply every pair once to a batch of states.

    For each pair in order: ``p+ = <psi|M+^dagger M+|psi>``, apply M+ when
    the uniform draw is below p+ and M- otherwise, then renormalize.

    Args:
        states: States of shape (D,) or (B, D)
        pairs: MeasurementPair items or (site, pair) tuples
        uniforms: Uniform draws of shape (n_pairs,) or (B, n_pairs)
        dims: Local dimensions when pairs are placed at sites

    Returns:
        Tuple of (new states, clicks in {+1, -1} as int8)

    Raises:
        BrokenPairError: If a branch probability leaves [-1e-10, 1 + 1e-10]
    """
    single = np.asarray(states).ndim == 1
    batch = np.array(np.atleast_2d(states), dtype=complex)
    draws = np.atleast_2d(np.asarray(uniforms, dtype=float))
    placed = place_pairs(pairs)

    if draws.shape != (batch.shape[0], len(placed)):
        raise ValueError(
            f"Expected uniforms of shape {(batch.shape[0], len(placed))}, got {draws.shape}"
        )

    clicks = np.empty((batch.shape[0], len(placed)), dtype=np.int8)
    for k, (site, pair) in enumerate(placed):
        norm_sq = np.einsum('bi,bi->b', batch.conj(), batch).real
        plus = apply_local(pair.m_plus, batch, site, dims)
        p_plus = np.einsum('bi,bi->b', plus.conj(), plus).real / norm_sq

        if np.any(p_plus < -PROB_TOL) or np.any(p_plus > 1 + PROB_TOL):
            bad = p_plus[(p_plus < -PROB_TOL) | (p_plus > 1 + PROB_TOL)][0]
            raise BrokenPairError(f"Pair {k} ({pair.tuning}) gave branch probability {bad:.12g}")

        take_plus = draws[:, k] < p_plus
        branch = plus
        if not np.all(take_plus):
            branch[~take_plus] = apply_local(pair.m_minus, batch[~take_plus], site, dims)
        batch = branch / np.linalg.norm(branch, axis=1, keepdims=True)
        clicks[:, k] = np.where(take_plus, 1, -1)

    if single:
        return batch[0], clicks[0]
    return batch, clicks


def step(
    state: np.ndarray,
    pairs: Sequence[PlacedPair],
    rng: np.random.Generator,
    dims: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One measurement sweep of a single normalized state.

    Args:
        state: Unit state vector
        pairs: Pairs in application order
        rng: Random generator supplying one uniform per pair
        dims: Local dimensions when pairs are placed at sites

    Returns:
        Tuple of (state', clicks)

    Raises:
        ValueError: If the state is not normalized
        BrokenPairError: On an out-of-range branch probability

    Example:
        >>> rep = make_spin_ops(0.5)
        >>> pair = make_pair(rep, 'ergodic', 0.1)
        >>> psi, clicks = step(np.array([1, 0], dtype=complex), [pair], np.random.default_rng(0))
        >>> clicks.shape
        (1,)
    """
    state = np.asarray(state, dtype=complex)
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"State must be normalized, |psi| = {norm:.12g}")
    n_pairs = len(pairs)
    return measurement_sweep(state, pairs, rng.random(n_pairs), dims)


def half_step_propagator(config: SimulationConfig) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Propagator exp(-i H dt/2) acting on a (B, D) batch."""
    H = config.hamiltonian
    if H is None:
        return None

    if sparse.issparse(H) or config.total_dim > EXPM_DENSE_LIMIT:
        generator = sparse.csr_matrix(H) * (-0.5j * config.dt)
        return lambda batch: expm_multiply(generator, batch.T).T

    U = expm(-0.5j * config.dt * np.asarray(H, dtype=complex))
    return lambda batch: batch @ U.T


def _expectations(op: Operator, batch: np.ndarray) -> np.ndarray:
    if sparse.issparse(op):
        applied = (op @ batch.T).T
    else:
        applied = batch @ np.asarray(op).T
    return np.einsum('bi,bi->b', batch.conj(), applied).real


def low_pass(signal: np.ndarray, tau: float, dt: float) -> np.ndarray:
    """
    Single-pole exponential filter ``y[n+1] = y[n] + (dt/tau)(x[n] - y[n])``, ``y[0] = x[0]``.

    Filters along the first axis.

    Raises:
        ValueError: If tau or dt is not positive

    Example:
        >>> low_pass(np.ones(5), tau=2.0, dt=1.0)
        array([1., 1., 1., 1., 1.])
    """
    if not tau > 0:
        raise ValueError(f"Filter time constant must be positive, got {tau}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")

    x = np.asarray(signal, dtype=float)
    if x.shape[0] == 0:
        return x.copy()

    a = dt / tau
    zi = x[:1].copy()
    y, _ = lfilter([0.0, a], [1.0, a - 1.0], x, axis=0, zi=zi)
    return y


def _filtered(config: SimulationConfig, clicks: np.ndarray) -> np.ndarray:
    if config.filter_tau is None:
        return clicks.astype(float)
    return low_pass(clicks.astype(float), config.filter_tau, config.dt)


# Trajectories and ensembles ---------------------------------------------------


def evolve_batch(
    config: SimulationConfig,
    trajectories: Sequence[int],
    on_sample: Callable[[int, np.ndarray], None],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evolve trajectories side by side.

    ``on_sample(index, batch)`` is called at every configured sample step.

    Returns:
        Tuple of (final states (B, D), clicks (B, n_steps, n_pairs))
    """
    half = half_step_propagator(config)
    rngs = [trajectory_rng(config.seed, t) for t in trajectories]
    batch = np.tile(config.start_state(), (len(rngs), 1))
    clicks = np.empty((len(rngs), config.n_steps, config.n_pairs), dtype=np.int8)
    sample_steps = set(config.sample_steps.tolist())

    sample_index = 0
    if 0 in sample_steps:
        on_sample(sample_index, batch)
        sample_index += 1

    for start in range(0, config.n_steps, STEP_BLOCK):
        stop = min(start + STEP_BLOCK, config.n_steps)
        draws = np.stack([rng.random((stop - start, config.n_pairs)) for rng in rngs], axis=1)

        for n in range(start, stop):
            if half is not None:
                batch = half(batch)
            batch, clicks[:, n] = measurement_sweep(batch, config.pairs, draws[n - start], config.dims)
            if half is not None:
                batch = half(batch)
                batch /= np.linalg.norm(batch, axis=1, keepdims=True)

            if n + 1 in sample_steps:
                on_sample(sample_index, batch)
                sample_index += 1

    return batch, clicks


def run_trajectory(config: SimulationConfig, trajectory: int = 0) -> TrajectoryRecord:
    """
    Run one trajectory.

    Deterministic given ``(config.seed, trajectory)``.

    Args:
        config: Simulation configuration
        trajectory: Trajectory index selecting the random stream

    Returns:
        TrajectoryRecord with clicks of shape (n_steps, n_pairs)
    """
    sample_steps = config.sample_steps
    observables = {name: np.empty(len(sample_steps)) for name in config.observables}

    def on_sample(index: int, batch: np.ndarray):
        for name, op in config.observables.items():
            observables[name][index] = _expectations(op, batch)[0]

    final, clicks = evolve_batch(config, [trajectory], on_sample)
    clicks = clicks[0]
    logger.debug(f"Trajectory {trajectory}: {config.n_steps} steps, click means {clicks.mean(axis=0)}")

    return TrajectoryRecord(
        clicks=clicks,
        filtered=_filtered(config, clicks),
        final_state=final[0],
        dt=config.dt,
        sample_times=config.dt * sample_steps,
        observables=observables,
    )


@dataclass
class _Accumulator:
    rho: Optional[np.ndarray]
    obs_sum: Dict[str, np.ndarray]
    obs_sq: Dict[str, np.ndarray]
    states: Optional[np.ndarray]
    click_sum: np.ndarray
    click_sq: np.ndarray


def _run_chunk(
    config: SimulationConfig, trajectories: List[int], keep_rho: bool, keep_states: bool
) -> _Accumulator:
    n_samples = len(config.sample_steps)
    D = config.total_dim
    acc = _Accumulator(
        rho=np.zeros((n_samples, D, D), dtype=complex) if keep_rho else None,
        obs_sum={name: np.zeros(n_samples) for name in config.observables},
        obs_sq={name: np.zeros(n_samples) for name in config.observables},
        states=np.empty((n_samples, len(trajectories), D), dtype=complex) if keep_states else None,
        click_sum=np.zeros(config.n_pairs),
        click_sq=np.zeros(config.n_pairs),
    )

    def on_sample(index: int, batch: np.ndarray):
        if acc.rho is not None:
            acc.rho[index] += np.einsum('bi,bj->ij', batch, batch.conj())
        for name, op in config.observables.items():
            values = _expectations(op, batch)
            acc.obs_sum[name][index] += values.sum()
            acc.obs_sq[name][index] += (values ** 2).sum()
        if acc.states is not None:
            acc.states[index] = batch

    _, clicks = evolve_batch(config, trajectories, on_sample)
    per_traj = clicks.mean(axis=1, dtype=float) if config.n_steps else np.zeros((len(trajectories), config.n_pairs))
    acc.click_sum = per_traj.sum(axis=0)
    acc.click_sq = (per_traj ** 2).sum(axis=0)
    return acc


def run_ensemble(
    config: SimulationConfig,
    n_traj: int,
    workers: int = 1,
    batch_size: int = 64,
    keep_states: bool = False,
) -> EnsembleResult:
    """
    Run independent trajectories and collect ensemble statistics.

    The ensemble density matrix is the average of |psi><psi| at each sample
    step. Results are bit-identical for any ``workers``.

    Args:
        config: Simulation configuration
        n_traj: Number of trajectories (at least 1)
        workers: Worker threads
        batch_size: Trajectories evolved together per work item
        keep_states: Keep per-trajectory state snapshots

    Returns:
        EnsembleResult

    Raises:
        ValueError: If n_traj, workers or batch_size is not positive
    """
    # Validate inputs
    if n_traj < 1:
        raise ValueError(f"n_traj must be at least 1, got {n_traj}")
    if workers < 1 or batch_size < 1:
        raise ValueError(f"workers and batch_size must be positive, got {workers}, {batch_size}")

    keep_rho = config.total_dim <= RHO_MAX_DIM
    if not keep_rho:
        logger.info(f"Hilbert dimension {config.total_dim} > {RHO_MAX_DIM}: rho_t not accumulated")

    chunks = [
        list(range(start, min(start + batch_size, n_traj)))
        for start in range(0, n_traj, batch_size)
    ]
    logger.info(f"Running {n_traj} trajectories in {len(chunks)} batches on {workers} workers")

    def work(chunk):
        return _run_chunk(config, chunk, keep_rho, keep_states)

    if workers == 1:
        results = [work(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, chunks))

    # Combine in chunk order so sums do not depend on scheduling
    first = results[0]
    rho = first.rho.copy() if keep_rho else None
    obs_sum = {k: v.copy() for k, v in first.obs_sum.items()}
    obs_sq = {k: v.copy() for k, v in first.obs_sq.items()}
    click_sum, click_sq = first.click_sum.copy(), first.click_sq.copy()
    for acc in results[1:]:
        if rho is not None:
            rho += acc.rho
        for name in obs_sum:
            obs_sum[name] += acc.obs_sum[name]
            obs_sq[name] += acc.obs_sq[name]
        click_sum += acc.click_sum
        click_sq += acc.click_sq

    means = {name: obs_sum[name] / n_traj for name in obs_sum}
    variances = {
        name: np.maximum(obs_sq[name] / n_traj - means[name] ** 2, 0.0) for name in obs_sum
    }
    click_means = click_sum / n_traj
    states = np.concatenate([acc.states for acc in results], axis=1) if keep_states else None

    return EnsembleResult(
        n_traj=n_traj,
        sample_times=config.dt * config.sample_steps,
        rho_t=rho / n_traj if rho is not None else None,
        observable_means=means,
        observable_vars=variances,
        click_means=click_means,
        click_vars=np.maximum(click_sq / n_traj - click_means ** 2, 0.0),
        states=states,
    )


# Einselection diagnostics -----------------------------------------------------


def einselection_tracker(
    kind: str,
    ensemble: EnsembleResult,
    rep: SpinRep,
    site: Optional[int] = None,
    dims: Optional[Sequence[int]] = None,
    generator: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Ensemble-mean einselection diagnostic at each sample time.

    ``uniaxial_variance`` is ``E[<s^2> - <s>^2]`` for the measurement
    generator s (default s3). ``triaxial_covariance`` is the trace of the
    spin covariance matrix, ``E[sum_i <s_i^2> - <s_i>^2]``, equal to j for
    coherent states.

    Args:
        kind: One of TRACKER_KINDS
        ensemble: Result of run_ensemble with keep_states=True
        rep: Spin representation of the tracked spin
        site: Spin index (None when the spin is the whole space)
        dims: Local dimensions when site is given
        generator: Local generator for the uniaxial tracker

    Returns:
        Array of shape (n_samples,)

    Raises:
        ValueError: On an unknown kind or an ensemble without state snapshots
    """
    if kind not in TRACKER_KINDS:
        raise ValueError(f"Unknown tracker '{kind}'. Available: {', '.join(TRACKER_KINDS)}")
    if ensemble.states is None:
        raise ValueError("Einselection tracking needs an ensemble run with keep_states=True")

    def full(op):
        return op if site is None else embed_operator(op, site, dims)

    states = ensemble.states
    n_samples, n_traj, D = states.shape
    flat = states.reshape(-1, D)

    ops = [rep.s3 if generator is None else generator] if kind == 'uniaxial_variance' else list(rep.ops)
    total = np.zeros(flat.shape[0])
    for op in ops:
        op = full(np.asarray(op))
        mean = _expectations(op, flat)
        second = _expectations(op @ op, flat)
        total += second - mean ** 2

    return total.reshape(n_samples, n_traj).mean(axis=1)


def uniaxial_bound(delta0: float, theta: float, n_steps) -> np.ndarray:
    """Synoptic uniaxial variance bound ``E[Delta_0] / (1 + 4 n theta^2)``."""
    n = np.asarray(n_steps, dtype=float)
    return delta0 / (1.0 + 4.0 * n * theta ** 2)


def coherent_bound(kappa0: float, theta: float, n_steps) -> np.ndarray:
    """
    Synoptic triaxial bound on ``tr E[Lambda_n] - j`` given its initial value kappa0.

    ``2 kappa0 / (kappa0 (e^(2 n theta^2) - 1) + 2 e^(2 n theta^2))``; decays as
    exp(-2t/T1) with ``T1 = dt/theta^2`` at late times.
    """
    growth = np.exp(2.0 * np.asarray(n_steps, dtype=float) * theta ** 2)
    return 2.0 * kappa0 / (kappa0 * (growth - 1.0) + 2.0 * growth)


def t1_time(dt: float, theta: float) -> float:
    """Relaxation time T1 = dt / theta^2."""
    return dt / theta ** 2


def white_noise_psd(click_rate: float, j: float, theta: float) -> float:
    """
    Strength S of the click-data noise, ``E[n(t) n(t')] = S delta(t - t')``, in units of x.

    ``S = 1 / (4 r j^2 theta^2)``; the one-sided PSD is 2S.
    """
    if click_rate <= 0 or j <= 0 or theta == 0:
        raise ValueError(f"Need positive r, j and nonzero theta, got r={click_rate}, j={j}, theta={theta}")
    return 1.0 / (4.0 * click_rate * j ** 2 * theta ** 2)


def bloch_relaxation_rates(
    times: np.ndarray,
    polarization: np.ndarray,
    equilibrium: Optional[Sequence[float]] = None,
    floor: float = 0.1,
) -> np.ndarray:
    """
    Exponential relaxation rate of each polarization component.

    Fits ``log|p_i(t) - p_eq_i|`` by a straight line over the samples where
    the deviation still exceeds ``floor`` times its initial value.

    Args:
        times: Sample times, shape (n,)
        polarization: Ensemble-mean polarization, shape (n, 3)
        equilibrium: Equilibrium polarization (default zero)
        floor: Relative deviation below which samples are ignored

    Returns:
        Rates of shape (3,); NaN for components that start at equilibrium
    """
    times = np.asarray(times, dtype=float)
    p = np.asarray(polarization, dtype=float)
    eq = np.zeros(p.shape[1]) if equilibrium is None else np.asarray(equilibrium, dtype=float)

    rates = np.full(p.shape[1], np.nan)
    for i in range(p.shape[1]):
        dev = np.abs(p[:, i] - eq[i])
        if dev[0] < 1e-6:
            continue
        mask = dev > floor * dev[0]
        if mask.sum() < 2:
            continue
        slope, _ = np.polyfit(times[mask], np.log(dev[mask]), 1)
        rates[i] = -slope
    return rates
