"""
Tests for thermal operators, their representations and closed-loop dynamics.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from spin_mor.core.measurement import superoperator_apply, superoperator_increment
from spin_mor.theory.thermal import (
    ThermalSpec,
    alpha_from_beta,
    alpha_identities,
    drift_diffusion,
    lindblad_increment,
    p_reconstruct,
    p_thermal,
    q_representation,
    radial_moment_increment,
    stationary_pdf,
    thermal_density,
    thermal_operator,
    thermal_pairs,
    verify_mmprime,
)
from conftest import random_direction


class TestAlpha:
    """Test the feedback gain branches."""

    @pytest.mark.parametrize("beta", [0.1, 1.0, 4.0, -2.0])
    def test_branches_share_identity(self, beta):
        expected = -2.0 / np.tanh(beta / 2)
        for branch in ('small', 'reciprocal'):
            alpha = alpha_from_beta(beta, branch)
            assert alpha_identities(alpha)['sum'] == pytest.approx(expected, rel=1e-12)

    def test_small_branch_bounded(self):
        assert abs(alpha_from_beta(50.0)) < 1.0
        assert alpha_from_beta(0.0) == 0.0

    def test_branch_errors(self):
        with pytest.raises(ValueError, match="infinite"):
            alpha_from_beta(0.0, 'reciprocal')
        with pytest.raises(ValueError, match="Unknown alpha branch"):
            alpha_from_beta(1.0, 'large')


class TestRepresentations:
    """Test the Q and P representations of the thermal operator."""

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ThermalSpec(0.5, np.inf)
        with pytest.raises(ValueError):
            ThermalSpec(0.5, 1.0, axis=[0, 0, 2])

    @pytest.mark.parametrize("j", [0.5, 1, 2.5])
    def test_q_closed_form_matches_direct(self, j, rng):
        spec = ThermalSpec(j, 0.8, axis=random_direction(rng))
        x = random_direction(rng)
        closed = q_representation(spec, x)
        direct = q_representation(spec, x, closed_form=False)
        assert closed == pytest.approx(direct, rel=1e-10)
        assert direct == pytest.approx(q_representation(thermal_operator(spec), x), rel=1e-12)

    @pytest.mark.parametrize("j", [0.5, 1.5])
    def test_p_reconstructs_thermal_operator(self, j, rng):
        axis = random_direction(rng)
        spec = ThermalSpec(j, 0.7, axis=axis)
        np.testing.assert_allclose(p_reconstruct(j, 0.7, axis), thermal_operator(spec), atol=1e-8)

    @pytest.mark.parametrize("j", [0.5, 2])
    def test_p_is_reciprocal_q_of_next_spin(self, j, rng):
        axis, x = random_direction(rng), random_direction(rng)
        p = p_thermal(j, 1.3, axis, x)
        assert p > 0
        assert p * q_representation(ThermalSpec(j + 1, 1.3, axis=axis), -x) == pytest.approx(1.0)
        assert p_thermal(j, 0.0, axis, x) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            p_thermal(j, np.nan, axis, x)

    @pytest.mark.parametrize("m", [-1, 0, 1])
    def test_mmprime_diagonal(self, m):
        check = verify_mmprime(1, m, m, 0.5)
        assert check.resolved
        assert check.defect < 1e-8
        assert check.rhs == pytest.approx(np.exp(-0.5 * m))

    def test_mmprime_off_diagonal_vanishes(self):
        check = verify_mmprime(1.5, 0.5, -1.5, 1.2)
        assert check.rhs == 0.0
        assert abs(check.lhs) < 1e-10

    def test_mmprime_rejects_invalid_m(self):
        with pytest.raises(ValueError, match="magnetic quantum number"):
            verify_mmprime(1, 0.5, 0.5, 1.0)
        with pytest.raises(ValueError):
            verify_mmprime(0.5, 1.5, 0.5, 1.0)


class TestDriftDiffusion:
    """Test the Ito description of closed-loop spinometry."""

    @pytest.mark.parametrize("m", [2, 4])
    @pytest.mark.parametrize("alpha", [0.0, -0.3, 0.8])
    def test_radial_moments_vanish_on_sphere(self, m, alpha, rng):
        dd = drift_diffusion(1.5, alpha, random_direction(rng))
        x = random_direction(rng)
        assert abs(radial_moment_increment(dd, x, m)) < 1e-12

    def test_rejects_small_spin(self):
        with pytest.raises(ValueError):
            drift_diffusion(0, 0.1)

    @pytest.mark.parametrize("alpha", [-0.4, 0.25, 3.0])
    def test_stationary_pdf_normalized(self, alpha):
        total, _ = quad(lambda z: 2 * np.pi * stationary_pdf(1, alpha, z), -1, 1)
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_stationary_pdf_reciprocal_symmetry(self):
        for z in (-0.9, 0.0, 0.4):
            assert stationary_pdf(2, -0.3, z) == pytest.approx(stationary_pdf(2, -1 / 0.3, z), rel=1e-10)

    def test_stationary_pdf_limits(self):
        assert stationary_pdf(0.5, 0.0, 0.3) == pytest.approx(1 / (4 * np.pi))
        with pytest.raises(ValueError, match="singular"):
            stationary_pdf(0.5, -1.0, 0.0)
        with pytest.raises(ValueError):
            stationary_pdf(0.5, 0.2, 1.5)


class TestLindblad:
    """Test the thermalizing Lindblad increment."""

    @pytest.mark.parametrize("j", [0.5, 1, 2])
    def test_thermal_state_is_stationary(self, j, rng):
        axis = random_direction(rng)
        beta = 1.3
        rho = thermal_density(ThermalSpec(j, beta, axis))
        delta = lindblad_increment(rho, j, 0.1, alpha_from_beta(beta), axis)
        assert np.linalg.norm(delta) < 1e-12

    def test_matches_closed_loop_pairs(self, rng):
        j, beta, theta = 1, 0.9, 1e-3
        axis = random_direction(rng)
        psi = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        psi /= np.linalg.norm(psi)
        rho = np.outer(psi, psi.conj())

        pairs = thermal_pairs(j, beta, theta, axis)
        increment = superoperator_increment(pairs, rho)
        expected = lindblad_increment(rho, j, theta, alpha_from_beta(beta), axis)
        # pair channels are even in theta, so the residual is O(theta^4)
        assert np.linalg.norm(increment - expected) < 1e-4 * np.linalg.norm(expected)

    def test_pairs_drive_toward_thermal_state(self):
        j, beta = 0.5, 2.0
        pairs = thermal_pairs(j, beta, 0.1)
        rho = np.eye(2, dtype=complex) / 2
        for _ in range(2000):
            rho = superoperator_apply(pairs, rho)
        target = thermal_density(ThermalSpec(j, beta))
        assert np.abs(rho - target).max() < 0.02

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            lindblad_increment(np.eye(3), 0.5, 0.1, 0.0)
