"""
Tests for GK projection and projected trajectories.
"""

import logging

import numpy as np
import pytest
from scipy.linalg import expm

from spin_mor.core.gk_manifold import GKState, random_gk_state
from spin_mor.core.measurement import (
    MeasurementPair,
    embed_operator,
    epsilon_param,
    hermitian_function,
    make_pair,
)
from spin_mor.core.spin_algebra import make_spin_ops
from spin_mor.processing.mor import (
    concurrence,
    fidelity,
    local_metrics,
    mixing_defect,
    project,
    project_random,
    projected_ensemble_step,
    projected_step,
    run_projected_trajectory,
    safe_frame,
)
from spin_mor.processing.trajectory import SimulationConfig, run_trajectory
from spin_mor.utils.validation import ConvergenceError
from conftest import random_unit

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

# generic mixing that keeps both identity weights away from zero
MIX = np.array([
    [np.cos(0.3), -np.exp(0.7j) * np.sin(0.3)],
    [np.sin(0.3), np.exp(0.7j) * np.cos(0.3)],
])


def coupled_pair(theta):
    """First-class pair on two qubits whose operators do not factor over the spins."""
    K = theta * (np.kron(SX, SX) + 0.5 * np.kron(SZ, SY))
    cos, sin = hermitian_function(K, np.cos), hermitian_function(K, np.sin)
    return MeasurementPair((cos + sin) / np.sqrt(2), (cos - sin) / np.sqrt(2), tuning='coupled', theta=theta)


def equal_rows(seed):
    """Rank-2 GK state whose two rows coincide."""
    base = random_gk_state(3, 1, 2, seed=seed)
    return GKState(tuple(np.vstack([c, c]) for c in base.coeffs))


class TestProjection:
    """Test projection onto the manifold."""

    def test_point_on_manifold(self):
        state = random_gk_state(order=3, rank=1, d=2, seed=0)
        result = project(state.evaluate(), state)
        assert result.converged
        assert result.distance < 1e-12
        assert result.fidelity == pytest.approx(1.0)

    def test_recovers_nearby_point(self, rng):
        state = random_gk_state(order=3, rank=1, d=2, seed=1)
        offset = 0.05 * random_unit(rng, state.dim)
        result = project(state.evaluate() + offset, state, max_iter=1000)
        assert result.converged
        assert result.distance <= 0.05 + 1e-10
        assert result.fidelity > 0.99

    def test_full_rank_reaches_any_state(self, rng):
        # rank-2 states of two qubits cover the whole space
        target = random_unit(rng, 4)
        result = project_random(target, rank=2, dims=[2, 2], seed=3, n_starts=2, max_iter=2000)
        assert result.fidelity > 1 - 1e-8

    def test_strict_raises_on_iteration_cap(self):
        init = random_gk_state(3, 1, 2, seed=2)
        target = random_gk_state(3, 1, 2, seed=5).evaluate()
        result = project(target, init, max_iter=0)
        assert not result.converged
        with pytest.raises(ConvergenceError, match="did not converge"):
            project(target, init, max_iter=0, strict=True)

    def test_argument_checks(self):
        init = random_gk_state(2, 1, 2, seed=1)
        with pytest.raises(ValueError, match="length"):
            project(np.ones(3), init)
        with pytest.raises(ValueError, match="zero vector"):
            project(np.zeros(4), init)
        with pytest.raises(ValueError):
            project(np.ones(4), init, step=0.0)
        with pytest.raises(ValueError):
            project_random(np.ones(4), 1, [2, 2], seed=0, n_starts=0)

    def test_fidelity(self):
        assert fidelity(np.array([1, 0]), np.array([0, 1])) == 0.0
        assert fidelity(np.array([2, 0]), np.array([1j, 0])) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            fidelity(np.zeros(2), np.ones(2))


class TestProjectedStep:
    """Test reduced-order Hamiltonian steps."""

    def test_order_one_rk4_matches_exponential(self, rng):
        # an order-1 manifold is the whole space, so the flow is exact
        state = random_gk_state(order=1, rank=1, d=3, seed=4)
        h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        H = 0.3 * (h + h.conj().T)
        dt = 0.1

        stepped = projected_step(state, -1j * H, dt, method='rk4')
        exact = expm(-1j * H * dt) @ state.evaluate()
        np.testing.assert_allclose(stepped.evaluate(), exact, atol=1e-8)

    def test_euler_is_first_order(self, rng):
        state = random_gk_state(order=1, rank=1, d=2, seed=5)
        H = np.array([[1.0, 0.5], [0.5, -1.0]])
        errors = []
        for dt in (1e-2, 5e-3):
            stepped = projected_step(state, -1j * H, dt, method='euler')
            errors.append(np.linalg.norm(stepped.evaluate() - expm(-1j * H * dt) @ state.evaluate()))
        assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)

    def test_argument_checks(self):
        state = random_gk_state(2, 1, 2, seed=1)
        with pytest.raises(ValueError, match="Unknown integrator"):
            projected_step(state, np.eye(4), 0.1, method='leapfrog')
        with pytest.raises(ValueError, match="Generator shape"):
            projected_step(state, np.eye(3), 0.1)


class TestProjectedTrajectory:
    """Test trajectories evolved on the manifold."""

    def test_single_spin_reproduces_full_trajectory(self):
        rep = make_spin_ops(1)
        config = SimulationConfig(
            dims=[3],
            pairs=[make_pair(rep, 'synoptic', 0.2, axis=a) for a in (1, 2, 3)],
            dt=1.0,
            n_steps=30,
            seed=8,
            sample_every=10,
        )
        run = run_projected_trajectory(config, gk_rank=1, trajectory=2)
        full = run_trajectory(config, trajectory=2)

        np.testing.assert_array_equal(run.record.clicks, full.clicks)
        np.testing.assert_allclose(run.fidelity, 1.0, atol=1e-8)
        assert run.flagged_steps == []

    def test_two_qubits_with_coupling(self):
        rep = make_spin_ops(0.5)
        pairs = [(site, make_pair(rep, 'synoptic', 0.15, axis=a)) for site in (0, 1) for a in (1, 3)]
        config = SimulationConfig(
            dims=[2, 2],
            pairs=pairs,
            dt=0.5,
            n_steps=20,
            seed=4,
            hamiltonian=0.4 * np.kron(rep.s1, rep.s1),
            sample_every=5,
        )
        run = run_projected_trajectory(config, gk_rank=2)
        assert run.record.clicks.shape == (20, 4)
        assert run.fidelity.shape == (5,)
        assert run.fidelity.min() > 0.99

    def test_rejects_nonpositive_rank(self):
        rep = make_spin_ops(0.5)
        config = SimulationConfig(dims=[2], pairs=[make_pair(rep, 'synoptic', 0.1)], dt=1.0, n_steps=2)
        with pytest.raises(ValueError, match="gk_rank"):
            run_projected_trajectory(config, gk_rank=0)


class TestSafeFrame:
    """Test the gauge-jitter retry at singular points."""

    def test_rank_drop_triggers_jitter(self, caplog):
        state = equal_rows(7)
        used, _ = safe_frame(state)
        assert used is state

        with caplog.at_level(logging.WARNING, logger='spin_mor.processing.mor'):
            jittered, frame = safe_frame(state, check_rank=True)
        assert 'below generic rank' in caplog.text
        change = np.linalg.norm(jittered.flat() - state.flat()) / np.linalg.norm(state.flat())
        assert 0 < change < 1e-7
        P = frame.g_pinv @ frame.g
        np.testing.assert_allclose(P @ P, P, atol=1e-8)

    def test_generic_state_is_kept(self):
        state = random_gk_state(3, 1, 2, seed=16)
        used, _ = safe_frame(state, check_rank=True)
        assert used is state

    def test_projection_leaves_degenerate_start(self, rng):
        state = equal_rows(7)
        result = project(random_unit(rng, state.dim), state, max_iter=0)
        assert not np.array_equal(result.gk.flat(), state.flat())


class TestMixingInvariance:
    """Test projected ensemble steps under unitary mixing of a pair."""

    def test_single_spin_pair_is_exact(self):
        state = random_gk_state(2, 1, 2, seed=11)
        pair = make_pair(make_spin_ops(0.5), 'synoptic', 0.1)
        psi = state.evaluate() / np.linalg.norm(state.evaluate())
        expected = sum(
            embed_operator(op, 0, [2, 2]) @ np.outer(psi, psi.conj()) @ embed_operator(op, 0, [2, 2]).conj().T
            for op in pair.operators()
        )
        np.testing.assert_allclose(projected_ensemble_step(state, pair, site=0), expected, atol=1e-12)
        assert mixing_defect(state, pair, MIX, site=0) < 1e-12

    def test_ensemble_step_is_a_density_matrix(self):
        rho = projected_ensemble_step(random_gk_state(2, 1, 2, seed=11), coupled_pair(0.05))
        assert np.trace(rho).real == pytest.approx(1.0)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
        assert np.linalg.eigvalsh(rho).min() > -1e-12

    def test_coupled_pair_defect_is_third_order(self):
        state = random_gk_state(2, 1, 2, seed=11)
        thetas = (0.02, 0.01)
        eps = [epsilon_param(coupled_pair(t)).epsilon for t in thetas]
        assert eps[0] / eps[1] == pytest.approx(2.0, rel=1e-2)

        defects = [mixing_defect(state, coupled_pair(t), MIX) for t in thetas]
        assert defects[1] > 1e-9
        assert defects[0] / defects[1] == pytest.approx(8.0, rel=0.3)


class TestLocalMetrics:
    """Test two-qubit diagnostics."""

    def test_bell_state(self):
        metrics = local_metrics(np.array([1, 0, 0, 1]) / np.sqrt(2), (0, 1))
        assert metrics['concurrence'] == pytest.approx(1.0)
        assert metrics['mutual_information'] == pytest.approx(2.0)
        assert metrics['direction_cosine_a'] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(metrics['covariance_a'], np.eye(3), atol=1e-12)

    def test_product_state(self):
        # |0> on qubit 0, |+> on qubit 1, |1> on qubit 2
        psi = np.kron(np.kron([1, 0], np.array([1, 1]) / np.sqrt(2)), [0, 1])
        metrics = local_metrics(psi, (2, 1))
        assert metrics['concurrence'] == pytest.approx(0.0, abs=1e-7)
        assert metrics['mutual_information'] == pytest.approx(0.0, abs=1e-10)
        assert metrics['direction_cosine_a'] == pytest.approx(1.0)
        assert metrics['direction_cosine_b'] == pytest.approx(1.0)
        np.testing.assert_allclose(metrics['cross_covariance'], 0.0, atol=1e-12)

    def test_concurrence_of_mixed_state(self):
        assert concurrence(np.eye(4) / 4) == 0.0

    def test_argument_checks(self):
        with pytest.raises(ValueError, match="2\\*\\*n"):
            local_metrics(np.ones(6), (0, 1))
        with pytest.raises(ValueError, match="Invalid qubit pair"):
            local_metrics(np.ones(4), (0, 0))
        with pytest.raises(ValueError, match="zero vector"):
            local_metrics(np.zeros(4), (0, 1))
