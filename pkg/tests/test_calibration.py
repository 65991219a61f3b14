"""
Tests for spinometer calibration.
"""

import numpy as np
import pytest

from spin_mor.core.spin_algebra import make_spin_ops
from spin_mor.theory.calibration import (
    bloch_feasible,
    bloch_rates,
    calibrate_bloch,
    calibrate_observation,
    calibrate_test_mass,
    equilibrium_polarization,
    quantum_limit_report,
)
from spin_mor.theory.thermal import ThermalSpec, thermal_density


class TestBloch:
    """Test the Bloch-rate calibration and its forward map."""

    @pytest.mark.parametrize("branch", ['small', 'reciprocal'])
    @pytest.mark.parametrize("rates", [(1.0, 1.0, 1.5), (1.0, 1.2, 1.5), (0.3, 0.5, 0.7)])
    def test_roundtrip(self, rates, branch):
        cal = calibrate_bloch(*rates, beta=1.0, branch=branch)
        recovered = bloch_rates(*cal.thetas, cal.alpha, cal.click_rate)
        np.testing.assert_allclose(recovered, rates, rtol=1e-10)

    def test_largest_epsilon_is_cap(self):
        cal = calibrate_bloch(1.0, 1.2, 1.5, beta=1.0, eps_max=0.05)
        assert max(cal.epsilons) == pytest.approx(0.05)
        assert cal.dt == pytest.approx(1.0 / cal.click_rate)

    def test_infinite_temperature(self):
        cal = calibrate_bloch(1.0, 1.0, 1.0, beta=0.0)
        assert cal.click_rate == pytest.approx(25.0)
        assert cal.alpha == 0.0

    def test_output_rate_rounding(self):
        free = calibrate_bloch(1.0, 1.2, 1.5, beta=1.0)
        cal = calibrate_bloch(1.0, 1.2, 1.5, beta=1.0, output_rate=7.0)
        clicks_per_sample = cal.click_rate / 7.0
        assert clicks_per_sample == pytest.approx(round(clicks_per_sample))
        assert cal.click_rate >= free.click_rate
        assert max(cal.epsilons) <= 0.1 + 1e-12
        recovered = bloch_rates(*cal.thetas, cal.alpha, cal.click_rate)
        np.testing.assert_allclose(recovered, cal.rates, rtol=1e-10)

    def test_feasibility_bounds(self):
        assert bloch_feasible(1.0, 1.2, 1.5, 1.0)
        assert not bloch_feasible(1.0, 1.2, 3.0, 1.0)
        assert not bloch_feasible(1.0, 3.0, 1.0, 0.0)

    def test_infeasible_rejected(self):
        with pytest.raises(ValueError, match="upper bound"):
            calibrate_bloch(1.0, 1.2, 3.0, beta=1.0)
        with pytest.raises(ValueError, match="lower bound"):
            calibrate_bloch(1.0, 3.0, 1.0, beta=0.0)

    def test_rejects_nonpositive_inputs(self):
        with pytest.raises(ValueError):
            calibrate_bloch(0.0, 1.0, 1.0, beta=1.0)
        with pytest.raises(ValueError):
            calibrate_bloch(1.0, 1.0, 1.0, beta=1.0, eps_max=0.0)
        with pytest.raises(ValueError):
            calibrate_bloch(1.0, 1.0, 1.0, beta=1.0, output_rate=-1.0)

    @pytest.mark.parametrize("beta", [0.5, 2.0])
    def test_equilibrium_matches_thermal_state(self, beta):
        rep = make_spin_ops(0.5)
        rho = thermal_density(ThermalSpec(0.5, beta))
        polarization = 2 * np.trace(rho @ rep.s3).real
        assert equilibrium_polarization(beta) == pytest.approx(polarization)


class TestTestMass:
    """Test the large-j test-mass calibration."""

    def test_gain_and_epsilon(self):
        cal = calibrate_test_mass(4.0, 100.0, 1.0)
        assert cal.alpha == pytest.approx(-np.tanh(1.0))
        assert cal.epsilon == pytest.approx(0.1)
        assert cal.j_theta_sq * (1 + cal.alpha**2) == pytest.approx(0.01)
        assert cal.theta(1000) == pytest.approx(np.sqrt(cal.j_theta_sq / 1000))

    def test_quantum_limit(self):
        report = quantum_limit_report(calibrate_test_mass(2.0, 50.0, 3.0), k=2.0)
        assert report['NF'] == pytest.approx(2.0)
        assert report['max_disagreement'] < 1e-12 * report['gamma']

    @pytest.mark.parametrize("kwargs", [{'Q': 0.0}, {'beta': -1.0}, {'omega0': 0.0}])
    def test_rejects_nonpositive(self, kwargs):
        args = {'beta': 1.0, 'Q': 10.0, 'omega0': 1.0}
        args.update(kwargs)
        with pytest.raises(ValueError):
            calibrate_test_mass(**args)


class TestObservation:
    """Test feedback-free observation calibrations."""

    def test_spin_z(self):
        cal = calibrate_observation('spin_z', 50.0)
        assert cal.click_rate == pytest.approx(1.0)
        assert cal.theta == pytest.approx(0.2)
        assert cal.gain == pytest.approx(0.2)
        with pytest.raises(ValueError, match="j_theta_sq"):
            quantum_limit_report(cal)

    def test_mass_coordinate_recovers_psd(self):
        cal = calibrate_observation('mass_q', 0.3, k=2.0, omega0=5.0)
        report = quantum_limit_report(cal)
        assert report['S_qn'] == pytest.approx(0.3)
        assert report['NF'] == pytest.approx(2.0)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError, match="Unknown observation kind"):
            calibrate_observation('mass_p', 1.0)
        with pytest.raises(ValueError):
            calibrate_observation('spin_z', 0.0)
        with pytest.raises(ValueError):
            calibrate_observation('mass_q', 1.0, k=-1.0)
