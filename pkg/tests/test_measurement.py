"""
Tests for measurement pairs and the operator-sum superoperator.
"""

import numpy as np
import pytest

from spin_mor.core.measurement import (
    TUNINGS,
    apply_local,
    embed_operator,
    epsilon_param,
    make_pair,
    superoperator_apply,
    superoperator_increment,
    theorema_chain,
    u_mix,
)
from spin_mor.core.spin_algebra import make_spin_ops
from conftest import random_unit


def random_density(rng, dim):
    psi = np.array([random_unit(rng, dim) for _ in range(3)])
    weights = np.array([0.5, 0.3, 0.2])
    return np.einsum('k,ki,kj->ij', weights, psi, psi.conj())


class TestMakePair:
    """Test pair construction in every tuning."""

    @pytest.mark.parametrize("tuning", TUNINGS)
    @pytest.mark.parametrize("j", [0.5, 1, 2.5])
    def test_completeness(self, tuning, j):
        rep = make_spin_ops(j)
        pair = make_pair(rep, tuning, 0.3, axis=2, alpha=0.4)
        assert pair.completeness_defect() < 1e-12
        assert pair.tuning == tuning

    def test_closed_loop_completeness_off_axis(self, spin_one):
        pair = make_pair(spin_one, 'closed_loop', 0.2, axis=[0.6, 0.8, 0.0], alpha=-0.5, thermal_axis=[0, 0, 1])
        assert pair.completeness_defect() < 1e-12
        assert pair.alpha == -0.5

    def test_closed_loop_along_thermal_axis_is_synoptic(self, spin_one):
        looped = make_pair(spin_one, 'closed_loop', 0.2, axis=3, alpha=-0.5)
        synoptic = make_pair(spin_one, 'synoptic', 0.2, axis=3)
        np.testing.assert_allclose(looped.m_plus, synoptic.m_plus, atol=1e-12)
        np.testing.assert_allclose(looped.m_minus, synoptic.m_minus, atol=1e-12)

    def test_spin_half_batrachian_minus_is_scalar(self, spin_half):
        pair = make_pair(spin_half, 'batrachian', 0.2, axis=1)
        np.testing.assert_allclose(pair.m_minus, np.cos(0.1) * np.eye(2), atol=1e-12)

    def test_rejects_unknown_tuning(self, spin_half):
        with pytest.raises(ValueError, match="Unknown tuning"):
            make_pair(spin_half, 'heraldic', 0.1)

    def test_rejects_nonfinite_theta(self, spin_half):
        with pytest.raises(ValueError):
            make_pair(spin_half, 'synoptic', np.nan)

    def test_rejects_bad_axis(self, spin_half):
        with pytest.raises(ValueError):
            make_pair(spin_half, 'synoptic', 0.1, axis=0)
        with pytest.raises(ValueError):
            make_pair(spin_half, 'synoptic', 0.1, axis=[1.0, 1.0, 0.0])


class TestUnitaryMixing:
    """Test the mixing unitaries relating the tunings."""

    @pytest.mark.parametrize("j", [0.5, 1.5])
    def test_ergodic_mixes_into_synoptic_and_batrachian(self, j):
        rep = make_spin_ops(j)
        ergodic = make_pair(rep, 'ergodic', 0.37, axis=3)
        chain = theorema_chain()

        synoptic = make_pair(rep, 'synoptic', 0.37, axis=3)
        mixed = u_mix(ergodic, chain['ergodic_to_synoptic'])
        np.testing.assert_allclose(mixed.m_plus, synoptic.m_plus, atol=1e-12)
        np.testing.assert_allclose(mixed.m_minus, synoptic.m_minus, atol=1e-12)

        batrachian = make_pair(rep, 'batrachian', 0.37, axis=3)
        mixed = u_mix(ergodic, chain['ergodic_to_batrachian'])
        np.testing.assert_allclose(mixed.m_plus, batrachian.m_plus, atol=1e-12)
        np.testing.assert_allclose(mixed.m_minus, batrachian.m_minus, atol=1e-12)

    def test_superoperator_invariant(self, spin_one, rng):
        pair = make_pair(spin_one, 'closed_loop', 0.3, axis=1, alpha=0.2)
        U = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
        rho = random_density(rng, 3)

        np.testing.assert_allclose(
            superoperator_apply([u_mix(pair, U)], rho),
            superoperator_apply([pair], rho),
            atol=1e-12,
        )

    def test_epsilon_invariant(self, spin_one, rng):
        pair = make_pair(spin_one, 'synoptic', 0.1, axis=2)
        U = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
        assert abs(epsilon_param(u_mix(pair, U)).epsilon - epsilon_param(pair).epsilon) < 1e-12

    def test_rejects_non_unitary(self, spin_half):
        pair = make_pair(spin_half, 'synoptic', 0.1)
        with pytest.raises(ValueError, match="not unitary"):
            u_mix(pair, np.array([[1, 1], [0, 1]]))


class TestEpsilon:
    """Test the first-class small parameter."""

    def test_zero_coupling(self, spin_half):
        assert epsilon_param(make_pair(spin_half, 'synoptic', 0.0)).epsilon == 0.0

    def test_grows_linearly_with_theta(self, spin_half):
        small = epsilon_param(make_pair(spin_half, 'synoptic', 0.01)).epsilon
        larger = epsilon_param(make_pair(spin_half, 'synoptic', 0.02)).epsilon
        assert larger / small == pytest.approx(2.0, rel=1e-3)


class TestSuperoperator:
    """Test the pair channels on density matrices."""

    @pytest.mark.parametrize("tuning", ['ergodic', 'batrachian', 'synoptic', 'raw'])
    def test_trace_preserving(self, tuning, spin_one, rng):
        pairs = [make_pair(spin_one, tuning, 0.4, axis=a) for a in (1, 2, 3)]
        rho = random_density(rng, 3)
        out = superoperator_apply(pairs, rho)
        assert abs(np.trace(out) - 1.0) < 1e-12
        assert np.linalg.eigvalsh(out).min() > -1e-12

    def test_unravelings_share_one_channel(self, spin_one, rng):
        rho = random_density(rng, 3)
        channels = [
            superoperator_apply([make_pair(spin_one, t, 0.3, axis=1)], rho)
            for t in ('ergodic', 'batrachian', 'synoptic')
        ]
        np.testing.assert_allclose(channels[0], channels[1], atol=1e-12)
        np.testing.assert_allclose(channels[0], channels[2], atol=1e-12)

    def test_increment_first_order(self, spin_half, rng):
        pairs = [make_pair(spin_half, 'synoptic', 1e-3, axis=a) for a in (1, 2, 3)]
        rho = random_density(rng, 2)
        increment = superoperator_increment(pairs, rho)
        exact = superoperator_apply(pairs, rho) - rho
        # both O(theta^2); they differ at O(theta^4)
        assert np.linalg.norm(exact - increment) < 1e-3 * np.linalg.norm(increment)

    def test_placed_pairs_match_embedding(self, spin_half, rng):
        dims = [2, 2]
        pair = make_pair(spin_half, 'synoptic', 0.2, axis=1)
        rho = random_density(rng, 4)

        placed = superoperator_apply([(1, pair)], rho, dims)
        full_pair = pair.__class__(
            m_plus=embed_operator(pair.m_plus, 1, dims),
            m_minus=embed_operator(pair.m_minus, 1, dims),
            tuning=pair.tuning,
            theta=pair.theta,
        )
        np.testing.assert_allclose(placed, superoperator_apply([full_pair], rho), atol=1e-12)

    def test_rejects_non_hermitian(self, spin_half):
        pair = make_pair(spin_half, 'synoptic', 0.1)
        with pytest.raises(ValueError, match="Hermitian"):
            superoperator_apply([pair], np.array([[1, 1], [0, 0]], dtype=complex))


class TestEmbedding:
    """Test local operator application."""

    def test_apply_local_matches_kron(self, spin_one, rng):
        dims = [2, 3, 2]
        psi = random_unit(rng, 12)
        expected = embed_operator(spin_one.s1, 1, dims) @ psi
        np.testing.assert_allclose(apply_local(spin_one.s1, psi, 1, dims), expected, atol=1e-12)

    def test_embed_rejects_bad_site(self, spin_half):
        with pytest.raises(ValueError):
            embed_operator(spin_half.s1, 2, [2, 2])
