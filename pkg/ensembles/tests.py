import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, TestCase

from wavefunctions.exceptions import ConfigurationError, SamplerError
from wavefunctions.hamiltonian import Energy, ToricParams, exact_expectation
from wavefunctions.lattice import build_lattice
from wavefunctions.rbm import random_params, sector_params, toric_ground_state_params
from wavefunctions.vmc import McEstimate, SamplerConfig

from .generation import ChainAborted, EnsembleConfig, accept_step, generate, propose_params
from .models import EnsembleRecord, MemberRecord
from .storage import load_ensemble, record_ensemble, save_ensemble


class StubUniforms:
    """Stands in for a Generator, handing out a fixed sequence of uniforms."""

    def __init__(self, values):
        self.values = iter(values)

    def random(self):
        return next(self.values)


def parameter_sum_energy(lat, params, tp, sampler, *keys):
    return McEstimate(mean=float(np.sum(params.values)), std_error=0.01, n_samples=100)


def failing_energy(lat, params, tp, sampler, *keys):
    if keys[2] > 0:
        raise SamplerError("stuck")
    return McEstimate(mean=0.0, std_error=0.0, n_samples=1)


class ProposalTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(3, 3)
        self.params = random_params(self.lat, 4, 0.3)

    def changed(self, proposal):
        return np.argwhere(proposal.values != self.params.values)

    def test_sign_flip_touches_one_bond(self):
        for seed in range(20):
            proposal = propose_params(self.params, np.random.default_rng(seed), p_m=1.0, xi=0.2)
            changed = self.changed(proposal)
            self.assertEqual(len(changed), 4)
            bonds = {int(self.lat.cell_bonds[cell, slot - 1]) for cell, slot in changed}
            self.assertEqual(len(bonds), 1)
            self.assertTrue(np.all(changed[:, 1] > 0))
            for cell, slot in changed:
                self.assertEqual(proposal.values[cell, slot], -self.params.values[cell, slot])

    def test_vanishing_noise_stays_local(self):
        xi = 1e-9
        for seed in range(20):
            proposal = propose_params(self.params, np.random.default_rng(seed), p_m=0.0, xi=xi)
            delta = proposal.values - self.params.values
            self.assertLess(np.max(np.abs(delta)), xi)
            self.assertGreaterEqual(np.min(delta), 0.0)
            support = np.argwhere(delta != 0)
            bonds = {int(self.lat.cell_bonds[cell, slot - 1]) for cell, slot in support}
            self.assertLessEqual(len(bonds), 1)

    def test_sign_flip_of_ground_state_creates_two_excitations(self):
        psi3 = toric_ground_state_params(self.lat)
        proposal = propose_params(psi3, np.random.default_rng(0), p_m=1.0, xi=0.2)
        energy = exact_expectation(self.lat, proposal, Energy(ToricParams()))
        self.assertAlmostEqual(energy, -14.0, places=9)


class AcceptanceTests(SimpleTestCase):

    def test_downhill_and_flat_moves_always_pass(self):
        rng = StubUniforms([0.999999] * 10)
        self.assertTrue(accept_step(-1.0, -2.0, 0.1, rng))
        self.assertTrue(accept_step(-1.0, -1.0, 0.1, rng))

    def test_uphill_acceptance_frequency(self):
        n = 100000
        rng = StubUniforms((np.arange(n) + 0.5) / n)
        accepted = sum(accept_step(0.0, 0.3, 0.3, rng) for _ in range(n))
        self.assertAlmostEqual(accepted / n, np.exp(-1.0), delta=0.005)


class GenerationTests(SimpleTestCase):

    def setUp(self):
        self.lat = build_lattice(2, 2)
        self.seeds = (sector_params(self.lat), sector_params(self.lat, True, False))
        self.sampler = SamplerConfig(n_chains=2, n_steps=40)

    def test_config_validation(self):
        with self.assertRaises(ConfigurationError):
            EnsembleConfig(n_steps=10, m_keep=11)
        with self.assertRaises(ConfigurationError):
            EnsembleConfig(temperature=0.0)
        self.assertEqual(EnsembleConfig(n_steps=7).keep, 7)

    def test_member_layout_and_energy_cache(self):
        ec = EnsembleConfig(temperature=0.5, k_chains=3, n_steps=12, m_keep=5, seeds=self.seeds, seed=1)
        ensemble = generate(self.lat, ToricParams(), ec, self.sampler, estimator=parameter_sum_energy)
        self.assertEqual(len(ensemble), 15)
        self.assertEqual([m.chain_id for m in ensemble.members], sorted(m.chain_id for m in ensemble.members))
        self.assertEqual([m.step for m in ensemble.members[:5]], [8, 9, 10, 11, 12])
        self.assertEqual(ensemble.n_estimates, 3 * (12 + 1))
        for member in ensemble.members:
            self.assertEqual(member.energy.mean, float(np.sum(member.params.values)))

    def test_keep_everything(self):
        ec = EnsembleConfig(k_chains=2, n_steps=6, seeds=self.seeds)
        ensemble = generate(self.lat, ToricParams(), ec, self.sampler, estimator=parameter_sum_energy)
        self.assertEqual(len(ensemble), 12)

    def test_generation_is_deterministic(self):
        ec = EnsembleConfig(k_chains=2, n_steps=8, seeds=self.seeds, seed=3)
        first = generate(self.lat, ToricParams(), ec, self.sampler, estimator=parameter_sum_energy)
        second = generate(self.lat, ToricParams(), ec, self.sampler, estimator=parameter_sum_energy)
        for a, b in zip(first.members, second.members):
            self.assertEqual(a.params, b.params)

    def test_lazy_chain_stays_near_seed(self):
        xi = 1e-6
        ec = EnsembleConfig(k_chains=1, n_steps=20, p_m=0.0, xi=xi, seeds=self.seeds[:1])
        ensemble = generate(self.lat, ToricParams(), ec, self.sampler, estimator=parameter_sum_energy)
        for member in ensemble.members:
            self.assertLess(np.max(np.abs(member.params.values - self.seeds[0].values)), 20 * xi)

    def test_chain_aborts_after_retries(self):
        ec = EnsembleConfig(k_chains=1, n_steps=3, seeds=self.seeds, max_retries=2)
        with self.assertRaises(ChainAborted):
            generate(self.lat, ToricParams(), ec, self.sampler, estimator=failing_energy)

    def test_generation_needs_seeds(self):
        with self.assertRaises(ConfigurationError):
            generate(self.lat, ToricParams(), EnsembleConfig(), self.sampler)

    def test_low_temperature_chain_with_sampled_energies(self):
        ec = EnsembleConfig(temperature=0.1, k_chains=2, n_steps=4, seeds=self.seeds, seed=2)
        ensemble = generate(self.lat, ToricParams(), ec, SamplerConfig(n_chains=4, n_steps=100))
        self.assertEqual(len(ensemble), 8)
        self.assertEqual(ensemble.n_estimates, 2 * 5)
        self.assertTrue(np.all(np.isfinite(ensemble.energies)))
        self.assertLess(float(np.mean(ensemble.energies)), -6.0)


class StorageTests(TestCase):

    def setUp(self):
        lat = build_lattice(2, 2)
        ec = EnsembleConfig(k_chains=2, n_steps=4, seeds=(sector_params(lat),), seed=5)
        self.ensemble = generate(lat, ToricParams(h=0.1), ec, SamplerConfig(), estimator=parameter_sum_energy)

    def test_directory_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_ensemble(self.ensemble, Path(tmp))
            loaded = load_ensemble(Path(tmp))
        self.assertEqual(len(loaded), len(self.ensemble))
        self.assertEqual(loaded.tp, self.ensemble.tp)
        self.assertEqual(loaded.config.n_steps, 4)
        for a, b in zip(loaded.members, self.ensemble.members):
            self.assertEqual(a.params, b.params)
            self.assertEqual(a.energy.mean, b.energy.mean)
            self.assertEqual((a.chain_id, a.step), (b.chain_id, b.step))

    def test_record_tracks_member_count_and_mean_energy(self):
        record = record_ensemble(self.ensemble, '/tmp/ensemble-a', {0: (0.9, -0.8)})
        self.assertEqual(record.member_count, 8)
        self.assertAlmostEqual(record.mean_energy, float(np.mean(self.ensemble.energies)))
        self.assertEqual(MemberRecord.objects.get(ensemble=record, member_id=0).sector, (1, -1))

        MemberRecord.objects.get(ensemble=record, member_id=7).delete()
        record.refresh_from_db()
        self.assertEqual(record.member_count, 7)

    def test_re_recording_replaces_previous_rows(self):
        record_ensemble(self.ensemble, '/tmp/ensemble-b')
        record_ensemble(self.ensemble, '/tmp/ensemble-b')
        self.assertEqual(EnsembleRecord.objects.filter(directory='/tmp/ensemble-b').count(), 1)
        self.assertEqual(MemberRecord.objects.count(), 8)
