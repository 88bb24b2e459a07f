import numpy as np
from django.test import SimpleTestCase

from . import exact
from .exceptions import ConfigurationError, EnumerationBudgetError, LatticeError, ZeroAmplitudeError
from .hamiltonian import (
    Energy,
    Identity,
    PlaquetteStabilizer,
    StarStabilizer,
    SzTotal,
    ToricParams,
    ZLoop,
    averaged_wilson,
    exact_expectation,
    local_energy,
    wilson_loop_value,
)
from .lattice import build_lattice, elementary_loop, loop_generators, straight_direct_loops, straight_dual_loops
from .rbm import (
    GaugeTransform,
    RbmParams,
    RbmWaveFunction,
    apply_gauge,
    log_amplitude,
    log_derivatives,
    polarized_params,
    random_params,
    sector_params,
    toric_ground_state_params,
)
from .vmc import (
    OptimizerConfig,
    SamplerConfig,
    batch_means,
    estimate,
    energy_gradient,
    exact_energy_gradient,
    fidelity_scan,
    gradient_terms,
    metropolis_accept,
    nearest_anchor,
    optimize,
    optimize_along,
    sample_chains,
    sample_configs,
)


def small_random_params(lat, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    return RbmParams.from_flat(lat, rng.uniform(-scale, scale, size=5 * lat.n_cells))


def amplitudes(lat, params):
    log_abs, sign = RbmWaveFunction(lat, params).log_psi(exact.spin_table(lat.n_spins))
    return sign * np.exp(log_abs)


class LatticeTests(SimpleTestCase):

    def test_counts_on_three_by_three(self):
        lat = build_lattice(3, 3)
        self.assertEqual(lat.n_spins, 18)
        self.assertEqual(lat.n_plaquettes, 9)
        self.assertEqual(lat.n_stars, 9)

    def test_every_bond_in_two_plaquettes_and_two_stars(self):
        for lat in (build_lattice(2, 2), build_lattice(3, 3), build_lattice(4, 3)):
            plaquette_hits = np.bincount(lat.plaquette_bonds.ravel(), minlength=lat.n_spins)
            star_hits = np.bincount(lat.star_bonds.ravel(), minlength=lat.n_spins)
            self.assertTrue(np.all(plaquette_hits == 2))
            self.assertTrue(np.all(star_hits == 2))
            for bonds in lat.cell_bonds:
                self.assertEqual(len(set(bonds)), 4)

    def test_bond_indices_are_unique_triples(self):
        lat = build_lattice(3, 4)
        triples = {lat.bond_coords(b) for b in range(lat.n_spins)}
        self.assertEqual(len(triples), lat.n_spins)

    def test_degenerate_lattice_rejected(self):
        with self.assertRaises(LatticeError):
            build_lattice(1, 3)
        with self.assertRaises(LatticeError):
            build_lattice(3, 0)

    def test_straight_dual_loops_partition_crossed_bonds(self):
        lat = build_lattice(3, 3)
        for direction in ('x', 'y'):
            loops = straight_dual_loops(lat, direction)
            self.assertEqual(len(loops), 3)
            self.assertTrue(all(loop.length == 3 for loop in loops))
            union = set().union(*(loop.bonds for loop in loops))
            self.assertEqual(len(union), lat.lx * lat.ly)

    def test_elementary_loop_around_star(self):
        lat = build_lattice(3, 3)
        loop = elementary_loop(lat, lat.star(1, 1))
        self.assertEqual(len(loop.cells), 4)
        self.assertEqual(len(set(loop.bonds)), 4)
        self.assertEqual(len(loop.incidences), 8)
        self.assertTrue(loop.contractible)
        for bond in loop.bonds:
            owners = [cell for cell, b in loop.incidences if b == bond]
            self.assertEqual(len(owners), 2)

    def test_elementary_loop_rejects_bad_cell(self):
        with self.assertRaises(LatticeError):
            elementary_loop(build_lattice(2, 2), 8)

    def test_translation_maps_cells_to_cells(self):
        lat = build_lattice(3, 4)
        perm = lat.bond_permutation(1, 2)
        plaquettes = {frozenset(b) for b in lat.plaquette_bonds.tolist()}
        stars = {frozenset(b) for b in lat.star_bonds.tolist()}
        for bonds in lat.plaquette_bonds:
            self.assertIn(frozenset(perm[bonds].tolist()), plaquettes)
        for bonds in lat.star_bonds:
            self.assertIn(frozenset(perm[bonds].tolist()), stars)

    def test_loop_generators(self):
        lat = build_lattice(3, 3)
        self.assertEqual(len(loop_generators(lat)), lat.n_cells + 4)


class RbmTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(3, 3)
        self.psi3 = toric_ground_state_params(self.lat)

    def test_ground_state_all_up(self):
        amp = log_amplitude(self.lat, self.psi3, np.ones(18))
        self.assertFalse(amp.is_zero)
        self.assertEqual(amp.sign, -1)
        self.assertAlmostEqual(amp.log_abs, 0.0, places=12)

    def test_ground_state_single_flip_is_zero(self):
        config = np.ones(18)
        config[4] = -1
        amp = log_amplitude(self.lat, self.psi3, config)
        self.assertTrue(amp.is_zero)
        self.assertEqual(amp.log_abs, -np.inf)
        self.assertEqual(amp.value, 0.0)

    def test_identity_parameters(self):
        params = RbmParams(3, 3, np.zeros((18, 5)))
        config = np.random.default_rng(1).choice([-1, 1], size=18)
        amp = log_amplitude(self.lat, params, config)
        self.assertEqual(amp.sign, 1)
        self.assertEqual(amp.log_abs, 0.0)
        self.assertTrue(np.all(log_derivatives(self.lat, params, config) == 0))

    def test_config_length_mismatch(self):
        with self.assertRaises(ConfigurationError):
            log_amplitude(self.lat, self.psi3, np.ones(17))

    def test_log_amplitude_matches_direct_product(self):
        lat = build_lattice(2, 2)
        params = small_random_params(lat, 5, scale=1.2)
        config = np.random.default_rng(6).choice([-1, 1], size=lat.n_spins)
        thetas = params.biases + np.array([params.weights[c] @ config[lat.cell_bonds[c]] for c in range(lat.n_cells)])
        direct = np.prod(np.cos(thetas))
        self.assertLess(abs(log_amplitude(lat, params, config).value - direct), 1e-12 * abs(direct))

    def test_log_derivatives_match_finite_differences(self):
        lat = build_lattice(2, 2)
        rng = np.random.default_rng(11)
        for seed in range(3):
            params = small_random_params(lat, seed)
            config = rng.choice([-1, 1], size=lat.n_spins)
            derivs = log_derivatives(lat, params, config)
            step = 1e-5
            for i in range(params.n_params):
                up = np.array(params.flat)
                down = np.array(params.flat)
                up[i] += step
                down[i] -= step
                numeric = (
                    log_amplitude(lat, RbmParams.from_flat(lat, up), config).log_abs
                    - log_amplitude(lat, RbmParams.from_flat(lat, down), config).log_abs
                ) / (2 * step)
                self.assertAlmostEqual(derivs[i], numeric, delta=1e-6)

    def test_bias_derivative_at_quarter_pi(self):
        values = np.zeros((18, 5))
        values[4, 0] = np.pi / 4
        params = RbmParams(3, 3, values)
        derivs = log_derivatives(self.lat, params, np.ones(18))
        self.assertAlmostEqual(derivs[5 * 4], -1.0, places=12)
        others = np.delete(derivs, [5 * 4 + k for k in range(5)])
        self.assertTrue(np.all(others == 0))

    def test_log_derivatives_reject_zero_amplitude(self):
        config = np.ones(18)
        config[0] = -1
        with self.assertRaises(ZeroAmplitudeError):
            log_derivatives(self.lat, self.psi3, config)

    def test_polarized_state_is_all_up(self):
        amps = amplitudes(self.lat, polarized_params(self.lat))
        nonzero = np.flatnonzero(amps)
        self.assertEqual(nonzero.tolist(), [0])

    def test_random_params_contract(self):
        self.assertEqual(random_params(self.lat, 0, 0.0), self.psi3)
        self.assertEqual(random_params(self.lat, 7, 0.1), random_params(self.lat, 7, 0.1))
        self.assertNotEqual(random_params(self.lat, 7, 0.1), random_params(self.lat, 8, 0.1))
        with self.assertRaises(ConfigurationError):
            random_params(self.lat, 0, -0.1)

    def test_flip_ratio_matches_full_recomputation(self):
        lat = build_lattice(3, 3)
        params = small_random_params(lat, 4, scale=1.0)
        wf = RbmWaveFunction(lat, params)
        configs = np.random.default_rng(2).choice([-1, 1], size=(20, lat.n_spins))
        thetas = wf.thetas(configs)
        for bonds in ([3], list(lat.star_bonds[2]), [0, 7]):
            flipped = configs.copy()
            flipped[:, bonds] *= -1
            log_new, sign_new = wf.log_psi(flipped)
            log_old, sign_old = wf.log_psi(configs)
            full = sign_new * sign_old * np.exp(log_new - log_old)
            np.testing.assert_allclose(wf.flip_ratios(configs, thetas, bonds), full, rtol=1e-12)

    def test_binary_round_trip_preserves_values(self):
        params = random_params(self.lat, 3, 0.2)
        self.assertEqual(RbmParams.from_bytes(params.to_bytes()), params)
        self.assertEqual(RbmParams.from_json(params.to_json()), params)


class GaugeTests(SimpleTestCase):

    def check_covariance(self, lat, n_pairs):
        rng = np.random.default_rng(lat.n_spins)
        loops = loop_generators(lat) + straight_direct_loops(lat, 'y') + straight_dual_loops(lat, 'x')
        for i in range(n_pairs):
            params = small_random_params(lat, 100 + i, scale=1.0)
            cell = int(rng.integers(lat.n_cells))
            bond = int(lat.cell_bonds[cell, rng.integers(4)])
            transforms = [
                GaugeTransform.sign_flip(cell),
                GaugeTransform.pi_shift_bias(cell),
                GaugeTransform.pi_shift_weight(cell, bond),
                GaugeTransform.half_pi_loop(loops[int(rng.integers(len(loops)))]),
            ]
            before = amplitudes(lat, params)
            for g in transforms:
                transformed, phase = apply_gauge(params, g)
                after = amplitudes(lat, transformed)
                np.testing.assert_allclose(after, np.cos(phase) * before, rtol=1e-10, atol=1e-300)

    def test_gauge_covariance_two_by_two(self):
        self.check_covariance(build_lattice(2, 2), 100)

    def test_gauge_covariance_three_by_three(self):
        self.check_covariance(build_lattice(3, 3), 12)

    def test_loop_phase_follows_length_parity(self):
        odd = straight_dual_loops(build_lattice(3, 3), 'x')[0]
        even = straight_dual_loops(build_lattice(2, 2), 'x')[0]
        self.assertEqual(GaugeTransform.half_pi_loop(odd).phase, np.pi)
        self.assertEqual(GaugeTransform.half_pi_loop(even).phase, 0.0)
        self.assertEqual(GaugeTransform.half_pi_loop(elementary_loop(build_lattice(3, 3), 0)).phase, 0.0)

    def test_double_loop_shift_is_pi_shift_family(self):
        lat = build_lattice(3, 3)
        params = small_random_params(lat, 9)
        loop = elementary_loop(lat, lat.star(1, 1))
        once, _ = apply_gauge(params, GaugeTransform.half_pi_loop(loop))
        twice, _ = apply_gauge(once, GaugeTransform.half_pi_loop(loop))
        np.testing.assert_allclose(np.cos(twice.values - params.values), np.where(twice.values != params.values, -1.0, 1.0), atol=1e-12)

    def test_invalid_references(self):
        params = toric_ground_state_params(build_lattice(2, 2))
        with self.assertRaises(LatticeError):
            apply_gauge(params, GaugeTransform.sign_flip(99))
        with self.assertRaises(LatticeError):
            apply_gauge(params, GaugeTransform.pi_shift_weight(0, 7))


class HamiltonianTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(3, 3)
        self.psi3 = toric_ground_state_params(self.lat)
        self.polarized = polarized_params(self.lat)
        self.uniform = RbmParams(3, 3, np.zeros((18, 5)))
        self.up = np.ones(18)

    def test_local_energy_examples(self):
        self.assertAlmostEqual(local_energy(self.lat, self.psi3, ToricParams(), self.up), -18.0, places=12)
        self.assertAlmostEqual(local_energy(self.lat, self.polarized, ToricParams(h=1.0), self.up), -27.0, places=12)
        config = np.random.default_rng(0).choice([-1, 1], size=18)
        self.assertEqual(local_energy(self.lat, self.uniform, ToricParams(0.0, 0.0, 0.0), config), 0.0)

    def test_local_energy_requires_nonzero_amplitude(self):
        config = np.ones(18)
        config[1] = -1
        with self.assertRaises(ZeroAmplitudeError):
            local_energy(self.lat, self.psi3, ToricParams(), config)

    def test_wilson_loop_values(self):
        loop = straight_dual_loops(self.lat, 'x')[1]
        self.assertAlmostEqual(wilson_loop_value(self.lat, self.psi3, self.up, loop), -1.0, places=12)
        self.assertEqual(wilson_loop_value(self.lat, self.polarized, self.up, loop), 0.0)
        self.assertAlmostEqual(wilson_loop_value(self.lat, self.uniform, -self.up, loop), 1.0, places=12)

    def test_wilson_loop_needs_dual_loop(self):
        with self.assertRaises(LatticeError):
            wilson_loop_value(self.lat, self.psi3, self.up, straight_direct_loops(self.lat, 'x')[0])

    def test_averaged_wilson_exact(self):
        w1, w2 = averaged_wilson(self.lat, self.psi3)
        self.assertAlmostEqual(w1, -1.0, places=10)
        self.assertAlmostEqual(w2, -1.0, places=10)
        self.assertEqual(tuple(round(w, 12) for w in averaged_wilson(self.lat, self.uniform)), (1.0, 1.0))
        self.assertEqual(averaged_wilson(self.lat, self.polarized), (0.0, 0.0))

    def test_averaged_wilson_sampled(self):
        sampler = SamplerConfig(n_chains=4, n_steps=200, seed=3)
        w1, w2 = averaged_wilson(self.lat, self.psi3, sampler)
        self.assertAlmostEqual(w1, -1.0, delta=0.01)
        self.assertAlmostEqual(w2, -1.0, delta=0.01)

    def test_exact_expectations_of_ground_state(self):
        self.assertAlmostEqual(exact_expectation(self.lat, self.psi3, Energy(ToricParams())), -18.0, places=10)
        self.assertAlmostEqual(exact_expectation(self.lat, self.psi3, SzTotal()), 0.0, places=10)
        self.assertAlmostEqual(exact_expectation(self.lat, self.psi3, Identity()), 1.0, places=12)

    def test_polarized_energy_in_field(self):
        value = exact_expectation(self.lat, self.polarized, Energy(ToricParams(h=1.0)))
        self.assertAlmostEqual(value, -27.0, places=10)
        self.assertAlmostEqual(exact_expectation(self.lat, self.polarized, StarStabilizer(self.lat.star(0, 0))), 0.0)

    def test_stabilizers_of_small_ground_state(self):
        lat = build_lattice(2, 2)
        params = toric_ground_state_params(lat)
        for cell in range(lat.n_cells):
            observable = PlaquetteStabilizer(cell) if lat.is_plaquette(cell) else StarStabilizer(cell)
            self.assertAlmostEqual(exact_expectation(lat, params, observable), 1.0, places=12)

    def test_ground_state_vanishes_off_the_plaquette_constraint(self):
        lat = build_lattice(2, 2)
        table = exact.spin_table(lat.n_spins)
        violated = np.any(np.prod(table[:, lat.plaquette_bonds], axis=2) < 0, axis=1)
        amps = amplitudes(lat, toric_ground_state_params(lat))
        self.assertTrue(np.all(amps[violated] == 0))
        self.assertTrue(np.all(amps[~violated] != 0))

    def test_star_flip_preserves_plaquettes(self):
        rng = np.random.default_rng(8)
        configs = rng.choice([-1, 1], size=(50, 18))
        before = np.prod(configs[:, self.lat.plaquette_bonds], axis=2)
        for bonds in self.lat.star_bonds:
            flipped = configs.copy()
            flipped[:, bonds] *= -1
            np.testing.assert_array_equal(np.prod(flipped[:, self.lat.plaquette_bonds], axis=2), before)

    def test_sector_representatives(self):
        expected = {(False, False): (-1, -1), (True, False): (1, -1), (False, True): (-1, 1), (True, True): (1, 1)}
        for flips, signs in expected.items():
            params = sector_params(self.lat, *flips)
            w1, w2 = averaged_wilson(self.lat, params)
            self.assertAlmostEqual(w1, signs[0], places=10)
            self.assertAlmostEqual(w2, signs[1], places=10)
            self.assertAlmostEqual(exact_expectation(self.lat, params, Energy(ToricParams())), -18.0, places=10)
            string = straight_direct_loops(self.lat, 'y')[0]
            self.assertAlmostEqual(abs(exact_expectation(self.lat, params, ZLoop(string))), 0.0, places=10)

    def test_sector_states_are_orthogonal(self):
        self.assertLess(exact.overlap(self.lat, self.psi3, sector_params(self.lat, True, False)), 1e-12)

    def test_enumeration_budget(self):
        lat = build_lattice(5, 5)
        with self.assertRaises(EnumerationBudgetError):
            exact_expectation(lat, toric_ground_state_params(lat), Identity())


class VmcTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(3, 3)
        self.small = build_lattice(2, 2)
        self.psi3 = toric_ground_state_params(self.lat)

    def test_sampler_config_validation(self):
        with self.assertRaises(ConfigurationError):
            SamplerConfig(p_spin_flip=1.0)
        with self.assertRaises(ConfigurationError):
            SamplerConfig(n_steps=10, n_burn=10)
        self.assertEqual(SamplerConfig(n_steps=400).burn, 100)

    def test_metropolis_acceptance_frequency(self):
        u = (np.arange(100000) + 0.5) / 100000
        self.assertTrue(np.all(metropolis_accept(np.full(10, 2.0), u[:10])))
        self.assertFalse(np.any(metropolis_accept(np.zeros(10), np.zeros(10))))
        freq = metropolis_accept(np.full(u.size, np.exp(-1.0)), u).mean()
        self.assertAlmostEqual(freq, np.exp(-1.0), delta=0.005)

    def test_ground_state_samples_respect_plaquettes(self):
        configs = sample_configs(self.lat, self.psi3, SamplerConfig(n_chains=4, n_steps=200, seed=1))
        self.assertTrue(np.all(np.prod(configs[:, self.lat.plaquette_bonds], axis=2) == 1))

    def test_polarized_samples_are_all_up(self):
        configs = sample_configs(self.lat, polarized_params(self.lat), SamplerConfig(n_chains=2, n_steps=100))
        self.assertTrue(np.all(configs == 1))

    def test_uniform_state_magnetization(self):
        params = RbmParams(3, 3, np.zeros((18, 5)))
        result = estimate(self.lat, params, SamplerConfig(n_chains=16, n_steps=2000, seed=5), SzTotal())
        self.assertLess(abs(result.mean), 4 * result.std_error + 1e-12)

    def test_eigenstate_energy_has_no_variance(self):
        result = estimate(self.lat, self.psi3, SamplerConfig(n_chains=4, n_steps=100), Energy(ToricParams()))
        self.assertAlmostEqual(result.mean, -18.0, places=10)
        self.assertLess(result.std_error, 1e-9)
        constant = estimate(self.lat, random_params(self.lat, 2, 0.2), SamplerConfig(n_chains=2, n_steps=80), Identity())
        self.assertEqual((constant.mean, constant.std_error), (1.0, 0.0))

    def test_energy_estimate_matches_enumeration(self):
        params = small_random_params(self.small, 12, scale=0.8)
        tp = ToricParams(h=0.3)
        result = estimate(self.small, params, SamplerConfig(n_chains=16, n_steps=2000, seed=4), Energy(tp))
        reference = exact_expectation(self.small, params, Energy(tp))
        self.assertLess(abs(result.mean - reference), 4 * result.std_error + 1e-9)

    def test_sampling_is_reproducible(self):
        sc = SamplerConfig(n_chains=3, n_steps=60, seed=42)
        params = random_params(self.lat, 1, 0.3)
        np.testing.assert_array_equal(sample_configs(self.lat, params, sc), sample_configs(self.lat, params, sc))

    def test_gradient_vanishes_at_zero_angles(self):
        params = RbmParams(2, 2, np.zeros((8, 5)))
        gradient = energy_gradient(self.small, params, SamplerConfig(n_chains=2, n_steps=80), ToricParams())
        self.assertTrue(np.all(gradient == 0))

    def test_ground_state_gradient_is_negligible(self):
        gradient = energy_gradient(self.lat, self.psi3, SamplerConfig(n_chains=4, n_steps=100), ToricParams())
        self.assertLess(np.linalg.norm(gradient), 1e-8)

    def node_free_params(self):
        # |theta| <= 0.5 on every configuration keeps all log-derivatives bounded
        params = small_random_params(self.small, 21, scale=0.1)
        thetas = RbmWaveFunction(self.small, params).thetas(exact.spin_table(self.small.n_spins))
        self.assertGreater(np.min(np.abs(np.cos(thetas))), 0.85)
        return params

    def test_exact_gradient_matches_finite_differences(self):
        params = self.node_free_params()
        tp = ToricParams(h=0.2)
        step = 1e-5
        reference = np.empty(params.n_params)
        for i in range(params.n_params):
            up, down = np.array(params.flat), np.array(params.flat)
            up[i] += step
            down[i] -= step
            reference[i] = (
                exact_expectation(self.small, RbmParams.from_flat(self.small, up), Energy(tp))
                - exact_expectation(self.small, RbmParams.from_flat(self.small, down), Energy(tp))
            ) / (2 * step)
        np.testing.assert_allclose(exact_energy_gradient(self.small, params, tp), reference, atol=1e-6)

    def test_sampled_gradient_within_error_bars(self):
        params = self.node_free_params()
        tp = ToricParams(h=0.2)
        sc = SamplerConfig(n_chains=16, n_steps=3000, seed=9)
        gradient = energy_gradient(self.small, params, sc, tp)
        samples = sample_chains(self.small, params, sc)
        _, terms = gradient_terms(RbmWaveFunction(self.small, params), samples.flat, tp)
        np.testing.assert_allclose(terms.mean(axis=0), gradient, rtol=1e-10, atol=1e-12)
        per_chain = terms.reshape(*samples.configs.shape[:2], -1)
        std_error = np.array([batch_means(per_chain[..., i], sc.n_batches).std_error for i in range(params.n_params)])
        deviation = np.abs(gradient - exact_energy_gradient(self.small, params, tp))
        np.testing.assert_array_less(deviation, np.maximum(1e-3, 4 * std_error))

    def test_exact_gradient_vanishes_at_ground_state(self):
        gradient = exact_energy_gradient(self.small, toric_ground_state_params(self.small), ToricParams())
        self.assertLess(np.linalg.norm(gradient), 1e-10)

    def test_optimize_from_exact_ground_state_stays_put(self):
        oc = OptimizerConfig(n_iterations=5)
        result = optimize(self.lat, self.psi3, ToricParams(), SamplerConfig(n_chains=4, n_steps=80), oc)
        self.assertEqual(len(result.trace), 5)
        for energy in result.trace:
            self.assertAlmostEqual(energy.mean, -18.0, places=6)

    def test_optimize_respects_variational_bound(self):
        oc = OptimizerConfig(n_iterations=30, learning_rate=0.02)
        sc = SamplerConfig(n_chains=8, n_steps=200, seed=2)
        result = optimize(self.small, random_params(self.small, 3, 0.2), ToricParams(), sc, oc)
        self.assertGreaterEqual(result.energy.mean, -8.0 - 3 * result.energy.std_error - 1e-9)

    def test_optimize_reaches_ground_energy_within_one_percent(self):
        oc = OptimizerConfig(n_iterations=300, learning_rate=0.01)
        sc = SamplerConfig(n_chains=8, n_steps=200, seed=1)
        result = optimize(self.lat, random_params(self.lat, 0, 0.15), ToricParams(), sc, oc)
        energy = exact_expectation(self.lat, result.params, Energy(ToricParams()))
        self.assertLess(energy, -18.0 * 0.99)
        self.assertGreaterEqual(energy, -18.0 - 1e-9)

    def test_optimize_is_deterministic(self):
        oc = OptimizerConfig(n_iterations=4)
        sc = SamplerConfig(n_chains=2, n_steps=60, seed=6)
        init = random_params(self.small, 5, 0.1)
        first = optimize(self.small, init, ToricParams(), sc, oc)
        second = optimize(self.small, init, ToricParams(), sc, oc)
        self.assertEqual(first.params, second.params)
        self.assertEqual([e.mean for e in first.trace], [e.mean for e in second.trace])

    def test_fidelity_of_repeated_field_is_one(self):
        oc = OptimizerConfig(n_iterations=2)
        sc = SamplerConfig(n_chains=2, n_steps=60)
        points = fidelity_scan(self.small, [0.1, 0.1], ToricParams(), toric_ground_state_params(self.small), sc, oc)
        self.assertEqual(len(points), 1)
        self.assertEqual(points[0].fidelity, 1.0)

    def test_nearest_anchor_prefers_lower_field_on_ties(self):
        anchors = [(0.0, 'a'), (0.5, 'b'), (1.0, 'c')]
        self.assertEqual(nearest_anchor(anchors, 0.2), 'a')
        self.assertEqual(nearest_anchor(anchors, 0.25), 'a')
        self.assertEqual(nearest_anchor(anchors, 0.3), 'b')
        self.assertEqual(nearest_anchor(anchors, 2.0), 'c')

    def test_optimize_along_starts_each_field_from_nearest_anchor(self):
        psi3, polarized = toric_ground_state_params(self.small), polarized_params(self.small)
        runs = list(optimize_along(
            self.small, [0.1, 0.9], ToricParams(), psi3,
            SamplerConfig(n_chains=2, n_steps=40), OptimizerConfig(n_iterations=1),
            anchors=[(0.0, psi3), (1.0, polarized)],
        ))
        self.assertEqual([h for h, _, _ in runs], [0.1, 0.9])
        self.assertEqual(runs[0][1].params, psi3)
        self.assertEqual(runs[1][1].params, polarized)

    def test_fidelity_grid_must_be_monotone(self):
        with self.assertRaises(ConfigurationError):
            fidelity_scan(self.small, [0.2, 0.1], ToricParams(), toric_ground_state_params(self.small),
                          SamplerConfig(n_chains=1, n_steps=20), OptimizerConfig(n_iterations=1))
