import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from wavefunctions.exceptions import EnumerationBudgetError
from wavefunctions.lattice import build_lattice, elementary_loop, straight_dual_loops
from wavefunctions.rbm import GaugeTransform, RbmParams, apply_gauge, random_params, sector_params
from wavefunctions.vmc import SamplerConfig

from .diffmap import (
    build_kernel,
    default_epsilon_grid,
    diffusion_distance,
    diffusion_map,
    epsilon_sweep,
    kmeans_embed,
    label_agreement,
    spectrum,
    transition_matrix,
)
from .exceptions import DiffusionError, SimilarityError
from .similarity import (
    SimilarityMatrix,
    euclidean_matrix,
    load_similarity,
    mix_similarities,
    network_matrix,
    overlap_exact,
    overlap_matrix,
    overlap_sampled,
    rank_agreement,
    save_similarity,
    similarity_euclidean,
    similarity_network,
    similarity_string,
    string_matrix,
)


def small_random_params(lat, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    return RbmParams.from_flat(lat, rng.uniform(-scale, scale, size=5 * lat.n_cells))


def block_similarity(sizes, inside=0.98, across=0.3):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    values = np.where(labels[:, None] == labels[None, :], inside, across)
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(values, 'n'), labels


def random_similarity(m, seed, low=0.5):
    rng = np.random.default_rng(seed)
    values = rng.uniform(low, 1.0, size=(m, m))
    values = (values + values.T) / 2
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(values, 'n')


class NetworkSimilarityTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(3, 3)
        self.params = random_params(self.lat, 3, 0.3)

    def test_identical_states(self):
        self.assertAlmostEqual(similarity_network(self.lat, self.params, self.params), 1.0, places=12)

    def test_invariant_under_sign_flips_and_pi_shifts(self):
        other = random_params(self.lat, 4, 0.3)
        reference = similarity_network(self.lat, self.params, other)
        for cell in (0, self.lat.star(1, 2)):
            bond = int(self.lat.cell_bonds[cell, 2])
            for g in (GaugeTransform.sign_flip(cell), GaugeTransform.pi_shift_bias(cell), GaugeTransform.pi_shift_weight(cell, bond)):
                transformed, _ = apply_gauge(self.params, g)
                self.assertAlmostEqual(similarity_network(self.lat, self.params, transformed), 1.0, places=12)
                self.assertAlmostEqual(similarity_network(self.lat, transformed, other), reference, places=12)
                self.assertAlmostEqual(similarity_network(self.lat, other, transformed), reference, places=12)

    def test_symmetric_and_bounded(self):
        for seed in range(10):
            a = small_random_params(self.lat, seed, scale=2.0)
            b = small_random_params(self.lat, seed + 50, scale=2.0)
            s_ab = similarity_network(self.lat, a, b)
            self.assertAlmostEqual(s_ab, similarity_network(self.lat, b, a), places=12)
            self.assertGreaterEqual(s_ab, 0.0)
            self.assertLessEqual(s_ab, 1.0)

    def test_lattice_mismatch(self):
        with self.assertRaises(SimilarityError):
            similarity_network(self.lat, self.params, sector_params(build_lattice(2, 2)))

    def test_matrix_matches_pairwise_values(self):
        params_list = [random_params(self.lat, seed, 0.4) for seed in range(5)]
        s = network_matrix(self.lat, params_list)
        self.assertEqual(s.tag, 'n')
        np.testing.assert_array_equal(s.values, s.values.T)
        np.testing.assert_array_equal(np.diag(s.values), np.ones(5))
        for i in range(5):
            for j in range(i + 1, 5):
                self.assertAlmostEqual(s.values[i, j], similarity_network(self.lat, params_list[i], params_list[j]), places=12)


class StringSimilarityTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(3, 3)
        self.params = random_params(self.lat, 8, 0.2)

    def test_no_search_is_network_similarity(self):
        other = random_params(self.lat, 9, 0.2)
        value = similarity_string(self.lat, self.params, other, 0, np.random.default_rng(0))
        self.assertEqual(value, similarity_network(self.lat, self.params, other))

    def test_recovers_elementary_loop_shift(self):
        for cell in (self.lat.star(1, 1), self.lat.plaquette(0, 2)):
            shifted, _ = apply_gauge(self.params, GaugeTransform.half_pi_loop(elementary_loop(self.lat, cell)))
            self.assertLess(similarity_network(self.lat, shifted, self.params), 0.99)
            value = similarity_string(self.lat, shifted, self.params, 1000, np.random.default_rng(cell))
            self.assertGreaterEqual(value, 1.0 - 1e-9)

    def test_recovers_straight_loop_shift(self):
        loop = straight_dual_loops(self.lat, 'x')[0]
        shifted, _ = apply_gauge(self.params, GaugeTransform.half_pi_loop(loop))
        value = similarity_string(self.lat, shifted, self.params, 1000, np.random.default_rng(1))
        self.assertGreaterEqual(value, 1.0 - 1e-9)

    def test_search_never_lowers_similarity(self):
        for seed in range(4):
            a = small_random_params(self.lat, seed, scale=1.0)
            b = small_random_params(self.lat, seed + 10, scale=1.0)
            base = similarity_network(self.lat, a, b)
            self.assertGreaterEqual(similarity_string(self.lat, a, b, 200, np.random.default_rng(seed)), base - 1e-12)

    def test_negative_budget(self):
        with self.assertRaises(SimilarityError):
            similarity_string(self.lat, self.params, self.params, -1, np.random.default_rng(0))

    def test_matrix_is_symmetric_and_reproducible(self):
        params_list = [random_params(self.lat, seed, 0.3) for seed in range(4)]
        first = string_matrix(self.lat, params_list, 50, seed=7)
        second = string_matrix(self.lat, params_list, 50, seed=7)
        np.testing.assert_array_equal(first.values, second.values)
        np.testing.assert_array_equal(first.values, first.values.T)
        self.assertTrue(np.all(first.values >= network_matrix(self.lat, params_list).values - 1e-12))


class EuclideanSimilarityTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(2, 2)
        self.params = small_random_params(self.lat, 1)

    def test_distance_examples(self):
        self.assertEqual(similarity_euclidean(self.params, self.params), 0.0)
        values = np.array(self.params.values)
        values[3, 2] += 0.25
        self.assertAlmostEqual(similarity_euclidean(self.params, self.params.replace(values)), 0.0625, places=12)

    def test_not_gauge_invariant(self):
        flipped, _ = apply_gauge(self.params, GaugeTransform.sign_flip(2))
        expected = float(np.sum((2 * self.params.values[2]) ** 2))
        self.assertAlmostEqual(similarity_euclidean(self.params, flipped), expected, places=12)
        self.assertGreater(expected, 0.0)

    def test_kernel_matrix(self):
        params_list = [small_random_params(self.lat, seed) for seed in range(5)]
        s = euclidean_matrix(params_list)
        self.assertEqual(s.measure, 'eu')
        np.testing.assert_array_equal(np.diag(s.values), np.ones(5))
        d_sq = similarity_euclidean(params_list[0], params_list[1])
        scale_sq = float(np.median([
            similarity_euclidean(params_list[i], params_list[j]) for i in range(5) for j in range(i + 1, 5)
        ]))
        self.assertAlmostEqual(s.values[0, 1], np.exp(-d_sq / scale_sq), places=10)

    def test_coinciding_parameters(self):
        s = euclidean_matrix([self.params] * 3)
        np.testing.assert_array_equal(s.values, np.ones((3, 3)))
        self.assertEqual(len(s.warnings), 1)


class OverlapTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(2, 2)

    def test_exact_overlap_examples(self):
        params = small_random_params(self.lat, 2, scale=1.0)
        self.assertAlmostEqual(overlap_exact(self.lat, params, params), 1.0, places=12)
        shifted, _ = apply_gauge(params, GaugeTransform.half_pi_loop(elementary_loop(self.lat, self.lat.star(0, 0))))
        self.assertAlmostEqual(overlap_exact(self.lat, params, shifted), 1.0, places=10)
        self.assertLess(overlap_exact(self.lat, sector_params(self.lat), sector_params(self.lat, False, True)), 0.01)

    def test_sampled_overlap_of_identical_states(self):
        params = small_random_params(self.lat, 3)
        estimate = overlap_sampled(self.lat, params, params, SamplerConfig(n_chains=4, n_steps=100))
        self.assertAlmostEqual(estimate.mean, 1.0, places=12)
        self.assertFalse(estimate.below_resolution)

    def test_sampled_overlap_matches_enumeration(self):
        sc = SamplerConfig(n_chains=8, n_steps=400, seed=5)
        for seed in range(5):
            a = small_random_params(self.lat, 20 + seed)
            b = small_random_params(self.lat, 40 + seed)
            estimate = overlap_sampled(self.lat, a, b, sc)
            self.assertLessEqual(abs(estimate.mean - overlap_exact(self.lat, a, b)), 4 * estimate.std_error + 0.01)

    def test_matrix_matches_pairwise_overlaps(self):
        params_list = [small_random_params(self.lat, seed, scale=1.0) for seed in range(4)]
        s = overlap_matrix(self.lat, params_list)
        self.assertEqual(s.measure, 'q')
        for i in range(4):
            for j in range(i + 1, 4):
                self.assertAlmostEqual(s.values[i, j], overlap_exact(self.lat, params_list[i], params_list[j]), places=5)

    @override_settings(ENUMERATION_MAX_SPINS=4)
    def test_matrix_beyond_budget(self):
        params_list = [small_random_params(self.lat, seed) for seed in range(3)]
        with self.assertRaises(EnumerationBudgetError):
            overlap_matrix(self.lat, params_list)
        s = overlap_matrix(self.lat, params_list, SamplerConfig(n_chains=4, n_steps=200))
        np.testing.assert_array_equal(s.values, s.values.T)
        self.assertTrue(np.all((s.values >= 0) & (s.values <= 1)))


class MixedSimilarityTests(SimpleTestCase):

    def setUp(self):
        lat = build_lattice(2, 2)
        params_list = [small_random_params(lat, seed, scale=1.0) for seed in range(6)]
        self.s_n = network_matrix(lat, params_list)
        self.s_q = overlap_matrix(lat, params_list)

    def test_no_replacement(self):
        mixed = mix_similarities(self.s_n, self.s_q, 0.0, seed=1)
        np.testing.assert_array_equal(mixed.values, self.s_n.values)
        self.assertEqual(mixed.tag, 'mixed(0)')

    def test_full_replacement_keeps_network_range(self):
        mixed = mix_similarities(self.s_n, self.s_q, 1.0, seed=1)
        self.assertTrue(np.all(mixed.replaced[np.triu_indices(6, k=1)]))
        self.assertAlmostEqual(mixed.off_diagonal().min(), self.s_n.off_diagonal().min(), places=12)
        self.assertAlmostEqual(mixed.off_diagonal().max(), self.s_n.off_diagonal().max(), places=12)

    def test_replacement_is_symmetric(self):
        mixed = mix_similarities(self.s_n, self.s_q, 0.4, seed=3)
        np.testing.assert_array_equal(mixed.replaced, mixed.replaced.T)
        np.testing.assert_array_equal(mixed.values, mixed.values.T)
        np.testing.assert_array_equal(np.diag(mixed.values), np.ones(6))

    def test_degenerate_overlap_range(self):
        flat = SimilarityMatrix(np.ones((6, 6)), 'q')
        mixed = mix_similarities(self.s_n, flat, 0.5, seed=0)
        self.assertEqual(len(mixed.warnings), 1)

    def test_invalid_fraction(self):
        with self.assertRaises(SimilarityError):
            mix_similarities(self.s_n, self.s_q, 1.5, seed=0)

    def test_rank_agreement(self):
        monotone = SimilarityMatrix(self.s_n.values ** 2, 'n')
        self.assertAlmostEqual(rank_agreement(self.s_n, monotone), 1.0, places=12)

    def test_network_and_overlap_similarity_rank_pairs_alike(self):
        lat = build_lattice(2, 2)
        rng = np.random.default_rng(3)
        base = np.empty((8, 5))
        base[:, 0] = rng.uniform(0.1, 0.2, 8)
        base[:, 1:] = np.pi / 2 - rng.uniform(0.1, 0.2, (8, 4))
        direction = rng.uniform(-1.0, 1.0, (8, 5))
        states = [RbmParams(2, 2, base + t * direction) for t in 0.003 * np.array([0, 1, 3, 7, 15])]
        self.assertGreaterEqual(rank_agreement(network_matrix(lat, states), overlap_matrix(lat, states)), 0.8)


class SimilarityStorageTests(SimpleTestCase):

    def test_save_and_load(self):
        s_n, _ = block_similarity([2, 3])
        mixed = mix_similarities(s_n, random_similarity(5, 0), 0.5, seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            base = Path(tmp) / 'similarity.mixed-0.5'
            paths = save_similarity(mixed, base, {'fraction': 0.5})
            self.assertEqual([p.name for p in paths][-1], 'similarity.mixed-0.5.csv')
            loaded = load_similarity(base)
        np.testing.assert_array_equal(loaded.values, mixed.values)
        np.testing.assert_array_equal(loaded.replaced, mixed.replaced)
        self.assertEqual(loaded.tag, 'mixed(0.5)')

    def test_matrix_shape_and_measure_are_checked(self):
        with self.assertRaises(SimilarityError):
            SimilarityMatrix(np.ones((2, 3)), 'n')
        with self.assertRaises(SimilarityError):
            SimilarityMatrix(np.ones((2, 2)), 'cosine')


class KernelTests(SimpleTestCase):

    def test_kernel_examples(self):
        np.testing.assert_array_equal(build_kernel(np.ones((4, 4)), 0.3), np.ones((4, 4)))
        s = random_similarity(6, 1)
        wide = build_kernel(s, 1e4)
        self.assertLess(np.max(1.0 - wide), (1.0 - s.values.min()) / 1e4)
        values = np.full((3, 3), 0.9)
        np.fill_diagonal(values, 1.0)
        self.assertAlmostEqual(build_kernel(values, 0.01)[0, 1], np.exp(-10.0), places=15)

    def test_kernel_rejects_non_positive_scale(self):
        with self.assertRaises(DiffusionError):
            build_kernel(np.ones((2, 2)), 0.0)

    def test_rows_are_stochastic(self):
        p, z = transition_matrix(build_kernel(random_similarity(12, 2), 0.05))
        np.testing.assert_allclose(p.sum(axis=1), np.ones(12), atol=1e-12)
        self.assertEqual(z.shape, (12,))

    def test_zero_row_rejected(self):
        kernel = np.eye(3)
        kernel[1, 1] = 0.0
        with self.assertRaises(DiffusionError):
            transition_matrix(kernel)


class SpectrumTests(SimpleTestCase):

    def test_uniform_transitions(self):
        eigenvalues, vectors = spectrum(*transition_matrix(np.ones((5, 5))))
        np.testing.assert_allclose(eigenvalues, [1, 0, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(vectors[:, 0], np.ones(5), atol=1e-8)

    def test_leading_eigenpair(self):
        result = diffusion_map(random_similarity(20, 3), 0.1)
        self.assertAlmostEqual(result.eigenvalues[0], 1.0, places=10)
        np.testing.assert_allclose(result.eigenvectors[:, 0], np.ones(20), atol=1e-8)
        self.assertTrue(np.all(result.eigenvalues <= 1 + 1e-10))
        self.assertTrue(np.all(np.diff(result.eigenvalues) <= 1e-12))
        self.assertEqual(result.embedding.shape, (20, 3))

    def test_matches_general_eigensolver(self):
        p, z = transition_matrix(build_kernel(random_similarity(6, 4), 0.2))
        eigenvalues, vectors = spectrum(p, z)
        oracle = np.sort(np.linalg.eigvals(p).real)[::-1]
        np.testing.assert_allclose(eigenvalues, oracle, atol=1e-8)
        np.testing.assert_allclose(p @ vectors, vectors * eigenvalues, atol=1e-8)

    def test_weighted_normalization(self):
        p, z = transition_matrix(build_kernel(random_similarity(9, 5), 0.1))
        _, vectors = spectrum(p, z)
        gram = vectors.T @ (vectors * (z / z.sum())[:, None])
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-10)

    def test_disconnected_blocks(self):
        labels = np.repeat([0, 1, 2], [2, 3, 4])
        kernel = (labels[:, None] == labels[None, :]).astype(float)
        eigenvalues, _ = spectrum(*transition_matrix(kernel))
        np.testing.assert_allclose(eigenvalues[:3], np.ones(3), atol=1e-10)
        self.assertLess(eigenvalues[3], 0.5)

    def test_two_blocks_are_two_fold_degenerate(self):
        s, _ = block_similarity([4, 5], inside=1.0, across=0.0)
        result = diffusion_map(s, 0.1)
        self.assertEqual(result.degeneracy_count, 2)
        self.assertGreater(result.gap, 0.9)

    def test_dissimilar_samples_are_all_near_one(self):
        values = np.full((7, 7), 0.1)
        np.fill_diagonal(values, 1.0)
        self.assertEqual(diffusion_map(values, 0.001).degeneracy_count, 7)

    def test_output_is_deterministic(self):
        s, _ = block_similarity([3, 3, 3])
        first, second = diffusion_map(s, 0.05), diffusion_map(s, 0.05)
        np.testing.assert_array_equal(first.eigenvectors, second.eigenvectors)


class DiffusionDistanceTests(SimpleTestCase):

    def test_same_sample(self):
        p, z = transition_matrix(build_kernel(random_similarity(5, 6), 0.1))
        self.assertEqual(diffusion_distance(p, z, 2, 3, 3), 0.0)

    def test_direct_and_spectral_forms_agree(self):
        for m, seed in ((8, 7), (40, 8), (64, 9)):
            p, z = transition_matrix(build_kernel(random_similarity(m, seed), 0.1))
            for t in (1, 2, 3):
                direct = diffusion_distance(p, z, t, 0, m - 1)
                spectral = diffusion_distance(p, z, t, 0, m - 1, method='spectral')
                self.assertLessEqual(abs(direct - spectral), 1e-8 * abs(direct))

    def test_block_distances(self):
        s, _ = block_similarity([4, 4], inside=1.0, across=0.5)
        p, z = transition_matrix(build_kernel(s, 0.1))
        self.assertLess(diffusion_distance(p, z, 50, 0, 1), 1e-20)
        self.assertGreater(diffusion_distance(p, z, 50, 0, 5), 0.01)

    def test_invalid_arguments(self):
        p, z = transition_matrix(np.ones((3, 3)))
        with self.assertRaises(DiffusionError):
            diffusion_distance(p, z, 0, 0, 1)
        with self.assertRaises(DiffusionError):
            diffusion_distance(p, z, 1, 0, 1, method='heat')


class EpsilonSweepTests(SimpleTestCase):

    def test_four_blocks_give_four_sectors(self):
        s, _ = block_similarity([10, 10, 10, 10])
        sweep = epsilon_sweep(s, default_epsilon_grid(), max_sectors=8)
        self.assertEqual(sweep.sector_count, 4)
        low, high = sweep.sector_range
        self.assertLess(low, high)
        for row in sweep.rows:
            if low <= row.epsilon <= high:
                self.assertEqual(row.degeneracy_count, 4)
                self.assertGreater(row.gap, 0.1)

    def test_single_block_gives_one_sector(self):
        values = np.full((30, 30), 0.9)
        np.fill_diagonal(values, 1.0)
        sweep = epsilon_sweep(values, default_epsilon_grid(), max_sectors=8)
        self.assertEqual(sweep.sector_count, 1)
        self.assertIsNone(sweep.sector_range)

    def test_lambda_one_does_not_increase(self):
        s, _ = block_similarity([5, 6, 7])
        sweep = epsilon_sweep(s, default_epsilon_grid())
        lambda_1 = [row.eigenvalues[1] for row in sweep.rows]
        self.assertTrue(np.all(np.diff(lambda_1) <= 1e-9))
        self.assertEqual(sweep.warnings, [])

    def test_grid_validation(self):
        s, _ = block_similarity([2, 2])
        with self.assertRaises(DiffusionError):
            epsilon_sweep(s, [])
        with self.assertRaises(DiffusionError):
            epsilon_sweep(s, [0.1, 0.05])

    def test_default_grid(self):
        grid = default_epsilon_grid()
        self.assertEqual(len(grid), 30)
        self.assertAlmostEqual(grid[0], 1e-3)
        self.assertAlmostEqual(grid[-1], 1.0)


class KMeansTests(SimpleTestCase):

    def test_two_blocks(self):
        s, labels = block_similarity([6, 4])
        assignment = kmeans_embed(diffusion_map(s, 0.05), 2, seed=0)
        np.testing.assert_array_equal(assignment.labels, labels)
        np.testing.assert_array_equal(assignment.sizes(), [6, 4])

    def test_four_blocks_recovered_up_to_naming(self):
        s, labels = block_similarity([5, 5, 5, 5])
        assignment = kmeans_embed(diffusion_map(s, 0.05), 4, seed=3)
        np.testing.assert_array_equal(assignment.labels, labels)

    def test_single_cluster_inertia_is_total_variance(self):
        result = diffusion_map(random_similarity(15, 10), 0.1)
        assignment = kmeans_embed(result, 1)
        np.testing.assert_array_equal(assignment.labels, np.zeros(15))
        psi_1 = result.eigenvectors[:, 1]
        self.assertAlmostEqual(assignment.inertia, float(np.sum((psi_1 - psi_1.mean()) ** 2)), places=8)

    def test_too_many_clusters(self):
        with self.assertRaises(DiffusionError):
            kmeans_embed(diffusion_map(np.ones((3, 3)), 0.1), 4)

    def test_deterministic_given_seed(self):
        result = diffusion_map(random_similarity(25, 11), 0.05)
        first, second = kmeans_embed(result, 3, seed=4), kmeans_embed(result, 3, seed=4)
        np.testing.assert_array_equal(first.labels, second.labels)
        self.assertEqual(first.inertia, second.inertia)


class LabelAgreementTests(SimpleTestCase):

    def test_relabeled_clustering_agrees_fully(self):
        labels = [0, 0, 1, 1, 2, 3, 3]
        renamed = [3, 3, 0, 0, 1, 2, 2]
        self.assertEqual(label_agreement(labels, renamed), 1.0)

    def test_one_misplaced_sample(self):
        self.assertAlmostEqual(label_agreement([0, 0, 1, 1], [1, 1, 0, 1]), 0.75)

    def test_different_number_of_labels(self):
        self.assertAlmostEqual(label_agreement([0, 0, 0, 0], [0, 0, 1, 1]), 0.5)

    def test_length_mismatch(self):
        with self.assertRaises(DiffusionError):
            label_agreement([0, 1], [0])
