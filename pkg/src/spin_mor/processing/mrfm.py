"""
Single-spin magnetic resonance force microscopy (MRFM) simulation.

One electron spin relaxes under a pair of x/y spinometers at infinite
temperature while a weak z-synoptic spinometer reads it out. The z clicks,
scaled to magneton units and low-pass filtered, form the MRFM record: a
random telegraph signal buried in white noise. The relaxing pairs may be
unraveled ergodically, batrachianly or synoptically; the recorded data are
statistically identical for all three, while the underlying quantum
polarization is not.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.measurement import make_pair
from ..core.spin_algebra import make_spin_ops
from .trajectory import SimulationConfig, evolve_batch, low_pass

logger = logging.getLogger(__name__)

UNRAVELINGS = ('batrachian', 'ergodic', 'synoptic')
SCALED_DURATION = 3600.0
FULL_DURATION = 13 * 3600.0
MIN_TELEGRAPH_SAMPLES = 10_000


@dataclass
class MrfmConfig:
    """
    Parameters of a single-spin MRFM run.

    Attributes:
        dt: Time between spinometric clicks in seconds
        theta_xy: Coupling of the x and y relaxation pairs
        theta_z: Coupling of the z-synoptic readout pair
        duration: Simulated time in seconds (one hour by default)
        filter_tau: Low-pass time constant of the readout in seconds
        unraveling: Tuning of the relaxation pairs, one of UNRAVELINGS
        seed: Base seed of the trajectory streams
    """

    dt: float = 7.1e-3
    theta_xy: float = 0.093
    theta_z: float = 0.026
    duration: float = SCALED_DURATION
    filter_tau: float = 0.76
    unraveling: str = 'batrachian'
    seed: int = 0

    def __post_init__(self):
        if self.unraveling not in UNRAVELINGS:
            raise ValueError(f"Unknown unraveling '{self.unraveling}'. Available: {', '.join(UNRAVELINGS)}")
        for name in ('dt', 'theta_xy', 'theta_z', 'duration', 'filter_tau'):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    @classmethod
    def full_scale(cls, **kwargs) -> 'MrfmConfig':
        """Config with the thirteen-hour duration of the full experiment."""
        return cls(duration=FULL_DURATION, **kwargs)

    @property
    def click_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def relaxation_time(self) -> float:
        """Spin relaxation time T_z = 2 / (r (theta_x^2 + theta_y^2))."""
        return 2.0 / (self.click_rate * 2.0 * self.theta_xy ** 2)

    @property
    def noise_psd(self) -> float:
        """One-sided readout noise PSD 2 / (r theta_z^2), in magneton units squared per Hz."""
        return 2.0 / (self.click_rate * self.theta_z ** 2)

    @property
    def filtered_noise_variance(self) -> float:
        """Variance of the filtered readout noise alone."""
        a = self.dt / self.filter_tau
        return a / (2.0 - a) / self.theta_z ** 2

    def simulation_config(self) -> SimulationConfig:
        rep = make_spin_ops(0.5)
        pairs = [
            (0, make_pair(rep, self.unraveling, self.theta_xy, axis=1)),
            (0, make_pair(rep, self.unraveling, self.theta_xy, axis=2)),
            (0, make_pair(rep, 'synoptic', self.theta_z, axis=3)),
        ]
        return SimulationConfig(
            dims=[2],
            pairs=pairs,
            dt=self.dt,
            n_steps=self.n_steps,
            seed=self.seed,
            sample_every=1,
        )

    def get_info(self) -> Dict:
        info = asdict(self)
        info.update({
            'n_steps': self.n_steps,
            'relaxation_time': self.relaxation_time,
            'noise_psd': self.noise_psd,
            'noise_amplitude': float(np.sqrt(self.noise_psd)),
        })
        return info


@dataclass
class MrfmResult:
    """
    Records of an MRFM run.

    Attributes:
        config: Run parameters
        filtered: Filtered readout, shape (n_traj, n_steps), magneton units
        polarization: Underlying quantum <z> = 2<s_z>, shape (n_traj, n_steps + 1)
        stats: Telegraph statistics of the filtered readout
        quantum_stats: Telegraph statistics of the underlying polarization
    """

    config: MrfmConfig
    filtered: np.ndarray
    polarization: np.ndarray
    stats: Dict = field(default_factory=dict)
    quantum_stats: Dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.config.dt * np.arange(1, self.filtered.shape[1] + 1)

    @property
    def ms_quantum(self) -> float:
        """Mean-square underlying polarization after the burn-in."""
        return float(np.mean(self.polarization[:, burn_in(self.config):] ** 2))

    def decimated(self, stride: Optional[int] = None) -> np.ndarray:
        """Filtered samples spaced far enough apart to be nearly independent."""
        if stride is None:
            stride = int(np.ceil(10.0 * max(self.config.filter_tau, self.config.relaxation_time) / self.config.dt))
        return self.filtered[:, burn_in(self.config)::stride].ravel()

    def rows(self, trajectory: int = 0) -> List[Dict]:
        """Rows (time, filtered) of one trajectory."""
        return [
            {'time': float(t), 'filtered': float(y)}
            for t, y in zip(self.times, self.filtered[trajectory])
        ]

    def summary(self) -> Dict:
        return {
            'config': self.config.get_info(),
            'n_traj': int(self.filtered.shape[0]),
            'ms_quantum': self.ms_quantum,
            'telegraph': self.stats,
            'quantum_telegraph': self.quantum_stats,
        }


def burn_in(config: MrfmConfig) -> int:
    """Steps discarded before statistics: five filter or relaxation times."""
    return int(np.ceil(5.0 * max(config.filter_tau, config.relaxation_time) / config.dt))


def _schmitt_states(signal: np.ndarray, threshold: float, hysteresis: float) -> np.ndarray:
    # +1/-1 after the first decisive sample, 0 before it
    marks = np.where(signal > threshold + hysteresis, 1, np.where(signal < threshold - hysteresis, -1, 0))
    index = np.where(marks != 0, np.arange(marks.size), 0)
    np.maximum.accumulate(index, out=index)
    return marks[index]


def telegraph_stats(
    signal: np.ndarray,
    dt: float,
    threshold: float = 0.0,
    hysteresis: float = 0.0,
    noise_var: float = 0.0,
    filter_tau: Optional[float] = None,
    correlation_time: Optional[float] = None,
    min_samples: int = MIN_TELEGRAPH_SAMPLES,
) -> Dict:
    """
    Dwell-time statistics of a random telegraph signal in white noise.

    Rows of a 2-D ``signal`` are independent records; their dwell times are
    pooled. Only complete dwells between two threshold crossings count. The
    mean-square polarization is inferred from the signal variance less
    ``noise_var``; given ``filter_tau`` and the spin ``correlation_time`` the
    low-pass attenuation ``T / (T + tau)`` is undone.

    Args:
        signal: Record(s), shape (n,) or (n_records, n)
        dt: Sample spacing in seconds
        threshold: Decision level
        hysteresis: Half-width of the dead band around the threshold
        noise_var: Variance of the noise part of the signal
        filter_tau: Low-pass time constant already applied to the signal
        correlation_time: Correlation time of the underlying polarization
        min_samples: Minimum total number of samples

    Returns:
        Dict with dwell_mean, dwell_std, switching_rate, n_switches,
        variance and ms_inferred

    Raises:
        ValueError: If the signal is too short or constant

    Example:
        >>> x = np.repeat(np.tile([1.0, -1.0], 50), 200)
        >>> telegraph_stats(x, dt=0.01)['dwell_mean']
        2.0
    """
    records = np.atleast_2d(np.asarray(signal, dtype=float))
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if records.size < min_samples:
        raise ValueError(f"Need at least {min_samples} samples, got {records.size}")
    if np.ptp(records) == 0:
        raise ValueError("Signal is constant; no telegraph statistics")

    dwells = []
    n_switches = 0
    for record in records:
        states = _schmitt_states(record, threshold, hysteresis)
        states = states[states != 0]
        edges = np.flatnonzero(np.diff(states)) + 1
        n_switches += edges.size
        dwells.append(np.diff(edges) * dt)
    dwells = np.concatenate(dwells)

    variance = float(np.var(records))
    ms_inferred = variance - noise_var
    if filter_tau is not None and correlation_time is not None:
        ms_inferred *= 1.0 + filter_tau / correlation_time

    return {
        'dwell_mean': float(dwells.mean()) if dwells.size else float('nan'),
        'dwell_std': float(dwells.std()) if dwells.size else float('nan'),
        'switching_rate': n_switches / (records.size * dt),
        'n_switches': int(n_switches),
        'variance': variance,
        'ms_inferred': float(ms_inferred),
    }


def _run_chunk(sim: SimulationConfig, config: MrfmConfig, trajectories: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    polarization = np.empty((len(trajectories), sim.n_steps + 1))

    def on_sample(index: int, batch: np.ndarray):
        polarization[:, index] = np.abs(batch[:, 0]) ** 2 - np.abs(batch[:, 1]) ** 2

    _, clicks = evolve_batch(sim, trajectories, on_sample)
    readout = clicks[:, :, 2].astype(float) / config.theta_z
    filtered = low_pass(readout.T, config.filter_tau, config.dt).T
    return filtered, polarization


def run_mrfm(
    config: MrfmConfig,
    n_traj: int = 1,
    workers: int = 1,
    batch_size: int = 32,
) -> MrfmResult:
    """
    Simulate MRFM detection of a single electron spin.

    Each trajectory starts at m = +1/2; relaxation is driven by the x and y
    pairs in ``config.unraveling`` and the readout by a z-synoptic pair.

    Args:
        config: Run parameters
        n_traj: Number of independent trajectories
        workers: Worker threads
        batch_size: Trajectories evolved together per task

    Returns:
        MrfmResult with telegraph statistics of readout and polarization

    Raises:
        ValueError: If n_traj, workers or batch_size is not positive
    """
    # Validate inputs
    if n_traj < 1 or workers < 1 or batch_size < 1:
        raise ValueError(f"n_traj, workers and batch_size must be positive, got {n_traj}, {workers}, {batch_size}")

    sim = config.simulation_config()
    logger.info(
        f"MRFM ({config.unraveling}): {n_traj} x {sim.n_steps} steps, "
        f"T_z = {config.relaxation_time:.3f} s, noise {np.sqrt(config.noise_psd):.2f} /sqrt(Hz)"
    )

    chunks = [list(range(s, min(s + batch_size, n_traj))) for s in range(0, n_traj, batch_size)]
    if workers == 1:
        parts = [_run_chunk(sim, config, chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda chunk: _run_chunk(sim, config, chunk), chunks))

    filtered = np.concatenate([p[0] for p in parts])
    polarization = np.concatenate([p[1] for p in parts])
    result = MrfmResult(config=config, filtered=filtered, polarization=polarization)

    start = burn_in(config)
    if filtered[:, start:].size >= MIN_TELEGRAPH_SAMPLES:
        result.stats = telegraph_stats(
            filtered[:, start:],
            config.dt,
            noise_var=config.filtered_noise_variance,
            filter_tau=config.filter_tau,
            correlation_time=config.relaxation_time,
        )
        if np.ptp(polarization[:, start:]) > 0:
            result.quantum_stats = telegraph_stats(polarization[:, start:], config.dt)
    else:
        logger.warning(f"Run too short for telegraph statistics ({filtered[:, start:].size} samples)")

    logger.info(f"MRFM ({config.unraveling}): ms quantum {result.ms_quantum:.4f}, stats {result.stats}")
    return result


def filtered_distribution_test(
    first: MrfmResult,
    second: MrfmResult,
    stride: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Two-sample Kolmogorov-Smirnov test between two filtered readouts.

    Both records are decimated so that retained samples are nearly
    independent.

    Returns:
        Tuple of (KS statistic, p-value)
    """
    a = first.decimated(stride)
    b = second.decimated(stride)
    if a.size < 2 or b.size < 2:
        raise ValueError(f"Too few decimated samples for a KS test ({a.size}, {b.size})")
    result = stats.ks_2samp(a, b)
    return float(result.statistic), float(result.pvalue)


def unraveling_sweep(config: MrfmConfig, n_traj: int = 1, workers: int = 1) -> Dict[str, MrfmResult]:
    """Run the same experiment under every unraveling."""
    return {
        name: run_mrfm(replace(config, unraveling=name), n_traj=n_traj, workers=workers)
        for name in UNRAVELINGS
    }
