"""
Tests for the single-spin MRFM simulation.
"""

import numpy as np
import pytest

from spin_mor.processing.mrfm import (
    FULL_DURATION,
    MrfmConfig,
    burn_in,
    filtered_distribution_test,
    run_mrfm,
    telegraph_stats,
    unraveling_sweep,
)
from spin_mor.processing.trajectory import low_pass


class TestMrfmConfig:
    """Test derived experiment parameters."""

    def test_default_timescales(self):
        config = MrfmConfig()
        assert config.relaxation_time == pytest.approx(0.8209, abs=1e-4)
        assert config.noise_psd == pytest.approx(21.006, abs=1e-3)
        assert config.n_steps == 507042
        assert config.get_info()['noise_amplitude'] == pytest.approx(4.583, abs=1e-3)

    def test_full_scale(self):
        config = MrfmConfig.full_scale(seed=3)
        assert config.duration == FULL_DURATION
        assert config.seed == 3

    def test_burn_in(self):
        assert burn_in(MrfmConfig()) == 579

    def test_simulation_config(self):
        sim = MrfmConfig(unraveling='ergodic', duration=1.0).simulation_config()
        assert [pair.tuning for _, pair in sim.pairs] == ['ergodic', 'ergodic', 'synoptic']
        assert sim.sample_every == 1

    def test_filtered_noise_variance(self, rng):
        config = MrfmConfig(dt=0.01, filter_tau=0.05, theta_z=0.5)
        clicks = rng.choice([-1.0, 1.0], size=200_000)
        filtered = low_pass(clicks / config.theta_z, config.filter_tau, config.dt)
        assert np.var(filtered) == pytest.approx(config.filtered_noise_variance, rel=0.03)

    @pytest.mark.parametrize("kwargs", [{'unraveling': 'heraldic'}, {'dt': 0.0}, {'filter_tau': np.inf}])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            MrfmConfig(**kwargs)


class TestTelegraphStats:
    """Test dwell-time statistics."""

    def test_square_wave(self):
        x = np.repeat(np.tile([1.0, -1.0], 50), 200)
        result = telegraph_stats(x, dt=0.01)
        assert result['dwell_mean'] == pytest.approx(2.0)
        assert result['dwell_std'] == pytest.approx(0.0)
        assert result['n_switches'] == 99
        assert result['ms_inferred'] == pytest.approx(1.0)

    def test_hysteresis_ignores_small_excursions(self):
        x = np.repeat(np.tile([1.0, -1.0], 50), 200)
        x[100] = -0.1
        assert telegraph_stats(x, dt=0.01, hysteresis=0.5)['n_switches'] == 99
        assert telegraph_stats(x, dt=0.01)['n_switches'] == 101

    def test_noise_and_attenuation_correction(self):
        x = np.repeat(np.tile([1.0, -1.0], 50), 200)
        result = telegraph_stats(x, dt=0.01, noise_var=0.5, filter_tau=1.0, correlation_time=1.0)
        assert result['ms_inferred'] == pytest.approx(1.0)

    def test_rejects_bad_signals(self):
        with pytest.raises(ValueError, match="at least"):
            telegraph_stats(np.ones(10), dt=0.1)
        with pytest.raises(ValueError, match="constant"):
            telegraph_stats(np.ones(20_000), dt=0.1)


class TestRunMrfm:
    """Test simulated MRFM records."""

    def test_batrachian_polarization_is_binary(self):
        result = run_mrfm(MrfmConfig(duration=20.0, seed=1), n_traj=2)
        assert result.filtered.shape == (2, 2817)
        assert result.polarization.shape == (2, 2818)
        np.testing.assert_allclose(np.abs(result.polarization), 1.0, atol=1e-12)
        assert result.ms_quantum == pytest.approx(1.0)
        # too short for telegraph statistics
        assert result.stats == {}

    def test_ergodic_polarization_is_not_binary(self):
        result = run_mrfm(MrfmConfig(duration=20.0, unraveling='ergodic', seed=1))
        assert result.ms_quantum < 0.99

    def test_deterministic_and_worker_independent(self):
        config = MrfmConfig(duration=5.0, seed=4)
        serial = run_mrfm(config, n_traj=3, batch_size=1)
        threaded = run_mrfm(config, n_traj=3, workers=3, batch_size=1)
        np.testing.assert_array_equal(serial.filtered, threaded.filtered)

    def test_rows_and_summary(self):
        result = run_mrfm(MrfmConfig(duration=2.0))
        rows = result.rows()
        assert len(rows) == result.filtered.shape[1]
        assert rows[0]['time'] == pytest.approx(7.1e-3)
        assert result.summary()['n_traj'] == 1

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(ValueError):
            run_mrfm(MrfmConfig(duration=1.0), n_traj=0)

    @pytest.mark.slow
    def test_batrachian_dwell_time(self):
        config = MrfmConfig(duration=600.0, seed=2)
        result = run_mrfm(config)
        # each relaxing pair flips with probability theta^2/4 per click
        assert result.quantum_stats['dwell_mean'] == pytest.approx(2 * config.relaxation_time, rel=0.15)
        assert result.stats['n_switches'] > 0

    @pytest.mark.slow
    def test_unravelings_share_readout_statistics(self):
        results = unraveling_sweep(MrfmConfig(duration=600.0, seed=5))
        assert set(results) == {'batrachian', 'ergodic', 'synoptic'}
        _, p_value = filtered_distribution_test(results['batrachian'], results['synoptic'])
        assert p_value > 1e-3
        assert results['ergodic'].ms_quantum < results['batrachian'].ms_quantum
