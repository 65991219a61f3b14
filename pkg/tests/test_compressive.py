"""
Tests for sampling dictionaries, restricted isometry and sparse recovery.
"""

import itertools

import numpy as np
import pytest

from spin_mor.compressive.dictionary import (
    build_dictionary,
    encode,
    extended_hamming_generator,
    gaussian_dictionary,
    hamming_distance,
    payload_length,
    wedge_and_hamming,
)
from spin_mor.compressive.recovery import (
    breakdown_sweep,
    gaussian_rip_median,
    project_l1_ball,
    rip_report,
    sampling_bound,
    soft_threshold,
    sparse_project,
    sparse_select,
    transition_point,
)
from spin_mor.core.gk_manifold import random_gk_state
from spin_mor.utils.validation import ConvergenceError
from conftest import random_unit


def min_pairwise_distance(words):
    return min(hamming_distance(a, b) for a, b in itertools.combinations(words, 2))


class TestWords:
    """Test words, codes and the wedge relation."""

    @pytest.mark.parametrize("j", [0.5, 1, 1.5])
    def test_wedge_matches_closed_form(self, j, rng):
        for _ in range(5):
            a = rng.integers(0, 4, size=4)
            b = rng.integers(0, 4, size=4)
            result = wedge_and_hamming(a, b, j)
            assert result['relation_defect'] < 1e-12

    def test_identical_words_have_zero_wedge(self):
        assert wedge_and_hamming([1, 2, 3], [1, 2, 3])['wedge_sq'] == pytest.approx(0.0, abs=1e-12)

    def test_word_errors(self):
        with pytest.raises(ValueError, match="lengths differ"):
            hamming_distance([0, 1], [0, 1, 2])
        with pytest.raises(ValueError, match="alphabet"):
            hamming_distance([0, 4], [0, 1])

    def test_payload_lengths(self):
        assert payload_length(5, 'none') == 5
        assert payload_length(5, 'parity') == 4
        assert payload_length(8, 'secded') == 4
        assert payload_length(16, 'secded') == 11
        with pytest.raises(ValueError):
            payload_length(6, 'secded')
        with pytest.raises(ValueError):
            payload_length(4, 'golay')

    def test_extended_hamming_distance(self):
        G = extended_hamming_generator(8)
        messages = np.array(list(itertools.product([0, 1], repeat=4)))
        codewords = messages @ G % 2
        weights = codewords[1:].sum(axis=1)
        assert weights.min() == 4

    def test_parity_code_distance(self):
        words = build_dictionary(3, 'parity').words(np.arange(16))
        assert min_pairwise_distance(list(words)) == 2

    def test_secded_code_distance(self):
        words = build_dictionary(8, 'secded').words(np.arange(256))
        assert words.shape == (256, 8)
        assert min_pairwise_distance(list(words)) == 4

    def test_encode_checks_payload(self):
        with pytest.raises(ValueError, match="expects"):
            encode(np.zeros((1, 3), dtype=int), 3, 'parity')


class TestDictionaries:
    """Test petal and Gaussian dictionaries."""

    def test_petal_shapes(self):
        assert build_dictionary(3, 'parity').shape == (8, 16)
        assert build_dictionary(4, 'secded').shape == (16, 4)
        assert build_dictionary(2, 'none', j=1).shape == (9, 16)

    def test_unit_columns(self):
        X = build_dictionary(3, 'parity').materialize()
        np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1.0, atol=1e-12)

    def test_coherence_of_parity_dictionary(self):
        X = build_dictionary(3, 'parity').materialize()
        gram = np.abs(X.conj().T @ X)
        np.fill_diagonal(gram, 0.0)
        assert gram.max() == pytest.approx(1 / 3)

    def test_lazy_products_match_dense(self, rng):
        D = build_dictionary(4, 'parity', j=0.5)
        X = D.materialize()
        w = rng.standard_normal(D.n_cols) + 1j * rng.standard_normal(D.n_cols)
        y = rng.standard_normal(D.n_rows)
        np.testing.assert_allclose(D.matvec(w), X @ w, atol=1e-12)
        np.testing.assert_allclose(D.rmatvec(y), X.conj().T @ y, atol=1e-12)
        assert D.spectral_norm() == pytest.approx(np.linalg.norm(X, 2))

    def test_info(self):
        info = build_dictionary(8, 'secded').get_info()
        assert info['min_hamming_distance'] == 4
        assert info['min_wedge_sq'] == pytest.approx(1 - 1 / 81)

    def test_index_and_size_limits(self):
        D = build_dictionary(3, 'parity')
        with pytest.raises(ValueError, match="out of range"):
            D.words([16])
        with pytest.raises(ValueError, match="too large"):
            build_dictionary(16, 'secded').materialize()
        with pytest.raises(ValueError, match="petal"):
            gaussian_dictionary(4, 8, seed=0).words([0])

    def test_gaussian(self):
        X = gaussian_dictionary(8, 16, seed=3).materialize()
        np.testing.assert_array_equal(X, gaussian_dictionary(8, 16, seed=3).materialize())
        Q = gaussian_dictionary(8, 16, seed=3, is_complex=True, orthonormalize=True).materialize()
        np.testing.assert_allclose(Q @ Q.conj().T, 2.0 * np.eye(8), atol=1e-12)
        with pytest.raises(ValueError):
            gaussian_dictionary(16, 8, orthonormalize=True)


class TestRip:
    """Test restricted-isometry reports."""

    @pytest.mark.parametrize("sparsity", [1, 2, 3])
    def test_parity_dictionary_passes(self, sparsity):
        report = rip_report(build_dictionary(3, 'parity'), sparsity)
        assert report.fraction == 1.0
        assert report.n_subsets == len(list(itertools.combinations(range(16), sparsity)))

    def test_unit_columns_have_zero_delta_one(self):
        report = rip_report(build_dictionary(3, 'parity'), 1)
        assert report.delta_max < 1e-12

    def test_sampled_mode_and_workers(self):
        D = build_dictionary(3, 'parity')
        serial = rip_report(D, 3, mode='sampled', n_samples=200, seed=1)
        threaded = rip_report(D, 3, mode='sampled', n_samples=200, seed=1, workers=2)
        assert serial.n_subsets == 200
        assert serial.to_dict() == threaded.to_dict()

    def test_exhaustive_limit(self):
        with pytest.raises(ValueError, match="sampled"):
            rip_report(build_dictionary(8, 'secded'), 4)

    def test_argument_checks(self):
        D = build_dictionary(3, 'parity')
        with pytest.raises(ValueError):
            rip_report(D, 0)
        with pytest.raises(ValueError, match="Unknown RIP mode"):
            rip_report(D, 2, mode='greedy')

    def test_gaussian_median(self):
        median = gaussian_rip_median(8, 16, 2, n_matrices=3)
        assert 0.0 <= median <= 1.0


class TestSparseSelect:
    """Test the shrinkage solvers."""

    def test_soft_threshold(self):
        np.testing.assert_allclose(soft_threshold(np.array([3.0, -0.5, -2.0]), 1.0), [2.0, 0.0, -1.0])
        np.testing.assert_allclose(soft_threshold(np.array([2j]), 0.5), [1.5j])

    def test_project_l1_ball(self, rng):
        v = rng.standard_normal(10)
        projected = project_l1_ball(v, 1.0)
        assert np.sum(np.abs(projected)) == pytest.approx(1.0)
        np.testing.assert_array_equal(project_l1_ball(0.01 * v, 1.0), 0.01 * v)

    @pytest.mark.parametrize("column", [0, 7, 13])
    def test_recovers_one_sparse_signal(self, column):
        D = build_dictionary(3, 'parity')
        y = 2.0 * D.columns([column])[0]
        solution = sparse_select(y, D, lam=0.05)
        assert solution.support().tolist() == [column]
        assert abs(solution.coefficients[column]) == pytest.approx(1.95, abs=1e-4)

    def test_bpdn_certificate(self, rng):
        D = build_dictionary(3, 'parity')
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        solution = sparse_select(y, D, lam=0.2, form='dantzig')
        assert solution.certificate <= 0.2 + 1e-6
        assert solution.slack >= -1e-6

    def test_lasso_radius(self, rng):
        X = gaussian_dictionary(8, 16, seed=2).materialize()
        y = rng.standard_normal(8)
        solution = sparse_select(y, X, lam=0.5, form='lasso')
        assert solution.l1_norm <= 0.5 + 1e-8

    def test_l1_norm_shrinks_with_lambda(self, rng):
        D = build_dictionary(3, 'parity')
        y = rng.standard_normal(8)
        norms = [sparse_select(y, D, lam=lam).l1_norm for lam in (0.01, 0.1, 0.5)]
        assert norms[0] >= norms[1] >= norms[2]

    def test_iteration_cap(self, rng):
        D = build_dictionary(3, 'parity')
        with pytest.raises(ConvergenceError):
            sparse_select(rng.standard_normal(8), D, lam=0.01, max_iter=1)

    def test_argument_checks(self):
        D = build_dictionary(3, 'parity')
        with pytest.raises(ValueError, match="Unknown form"):
            sparse_select(np.ones(8), D, 0.1, form='omp')
        with pytest.raises(ValueError, match="nonnegative"):
            sparse_select(np.ones(8), D, -0.1)
        with pytest.raises(ValueError, match="rows"):
            sparse_select(np.ones(7), D, 0.1)


class TestCompressedProjection:
    """Test GK fits to random projections."""

    def test_full_sampling_recovers_state(self, rng):
        target = random_gk_state(3, 1, 2, seed=11)
        X = gaussian_dictionary(8, 8, seed=1, is_complex=True)
        noise = rng.standard_normal(target.n_coords) + 1j * rng.standard_normal(target.n_coords)
        init = target.with_flat(target.flat() + 0.05 * noise)
        result = sparse_project(target.evaluate(), X, init, max_iter=1000)
        assert result.fidelity > 0.999

    def test_observed_only(self):
        X = gaussian_dictionary(4, 8, seed=1, is_complex=True)
        init = random_gk_state(3, 1, 2, seed=12)
        result = sparse_project(None, X, init, observed=np.ones(4), max_iter=5)
        assert np.isnan(result.fidelity)

    def test_argument_checks(self):
        init = random_gk_state(3, 1, 2, seed=1)
        with pytest.raises(ValueError, match="columns"):
            sparse_project(np.ones(8), gaussian_dictionary(4, 6, seed=0), init)
        with pytest.raises(ValueError, match="psi0 or observed"):
            sparse_project(None, gaussian_dictionary(4, 8, seed=0), init)

    def test_sampling_bound(self):
        S, n_sb = sampling_bound(5, 2048)
        assert S == 60.0
        assert round(n_sb) == 212
        with pytest.raises(ValueError):
            sampling_bound(0, 16)

    def test_transition_point(self):
        assert transition_point([10, 20, 30], [0.0, 0.5, 1.0]) == 20.0
        assert transition_point([30, 10, 20], [1.0, 0.0, 0.2]) == pytest.approx(23.75)
        assert transition_point([1, 2], [0.4, 0.4]) is None

    def test_breakdown_sweep(self):
        psi0 = random_gk_state(3, 1, 2, seed=21).evaluate()
        sweep = breakdown_sweep(psi0, gk_rank=1, n_values=[2, 8], seeds=[0], dims=[2, 2, 2], max_iter=500)
        assert len(sweep.rows) == 2
        assert {row['n'] for row in sweep.rows} == {2, 8}
        assert all(0.0 <= row['fidelity'] <= 1.0 + 1e-12 for row in sweep.rows)
        assert sweep.sparsity == pytest.approx(4.0)

    def test_breakdown_sweep_flags_iteration_cap(self, rng):
        psi0 = random_unit(rng, 8)
        sweep = breakdown_sweep(psi0, gk_rank=1, n_values=[3, 6], seeds=[0], dims=[2, 2, 2], max_iter=0)
        assert [row['converged'] for row in sweep.rows] == [False, False]
        assert not sweep.all_converged
