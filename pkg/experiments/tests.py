import csv
import json
import os
import shutil
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from ensembles.generation import EnsembleConfig, generate
from ensembles.models import EnsembleRecord, MemberRecord
from spectra.diffmap import epsilon_sweep, label_agreement
from spectra.similarity import overlap_matrix, similarity_mixed
from wavefunctions.hamiltonian import ToricParams
from wavefunctions.lattice import build_lattice
from wavefunctions.rbm import polarized_params, toric_ground_state_params
from wavefunctions.vmc import SamplerConfig

from . import artifacts
from .config import (
    ExperimentConfig, config_hash, dumps_config, load_config, loads_config, presets, with_overrides,
)
from .emitters import EMBEDDING_COLUMNS, cell, emit_tables, spectrum_cells
from .models import ExperimentRun, RunStatus
from .pipeline import STAGES, RunManifest, StageFailed, StageOutcome, _fidelity, run_field_sweep, run_pipeline


def tiny_config(**sections) -> dict:
    """A 2x2 run small enough to finish in a few seconds."""
    data = {
        'schema_version': 1,
        'name': 'tiny',
        'seed': 7,
        'lattice': {'lx': 2, 'ly': 2},
        'sampler': {'n_chains': 2, 'n_steps': 40, 'n_batches': 4},
        'seeds': {'source': 'analytic'},
        'ensemble': {'temperature': 0.1, 'k_chains': 4, 'n_steps': 6, 'm_keep': 3},
        'similarity': {'measure': 'n'},
        'diffusion': {'epsilon': [0.01, 0.02, 0.05, 0.1, 0.2], 'min_persistence': 1, 'n_eigenvalues': 6},
        'clustering': {'k': 4, 'n_restarts': 4},
    }
    for name, values in sections.items():
        data[name] = {**data.get(name, {}), **values}
    return data


def read_rows(path):
    with Path(path).open(newline='') as handle:
        return list(csv.DictReader(handle))


class ConfigTests(SimpleTestCase):

    def test_round_trip_is_byte_identical(self):
        text = dumps_config(ExperimentConfig.from_dict(tiny_config()))
        self.assertEqual(dumps_config(loads_config(text)), text)
        self.assertTrue(text.endswith('}\n'))

    def test_missing_sections_take_defaults(self):
        cfg = ExperimentConfig.from_dict({'schema_version': 1, 'name': 'defaults'})
        self.assertEqual((cfg.lattice.lx, cfg.lattice.ly), (3, 3))
        self.assertEqual(cfg.similarity.measure, 'n')
        self.assertEqual(len(cfg.diffusion.grid), 30)

    def test_empty_epsilon_grid_is_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            ExperimentConfig.from_dict(tiny_config(diffusion={'epsilon': []}))
        self.assertTrue(any(m.startswith('diffusion.epsilon') for m in ctx.exception.messages))

    def test_decreasing_epsilon_grid_is_rejected(self):
        with self.assertRaises(ValidationError):
            ExperimentConfig.from_dict(tiny_config(diffusion={'epsilon': [0.1, 0.05]}))

    def test_fidelity_grid_validation(self):
        for grid in ([0.6, 0.5], [0.5], [0.5, "x"]):
            with self.assertRaises(ValidationError) as ctx:
                ExperimentConfig.from_dict(tiny_config(fidelity={'h_grid': grid}))
            self.assertTrue(any(m.startswith('fidelity.h_grid') for m in ctx.exception.messages))

    def test_fidelity_grid_defaults_to_sweep_grid(self):
        cfg = ExperimentConfig.from_dict(tiny_config(hamiltonian={'h_grid': [0.0, 0.5]}))
        self.assertEqual(cfg.fidelity.grid(cfg.hamiltonian.h_grid), (0.0, 0.5))
        fine = ExperimentConfig.from_dict(tiny_config(
            hamiltonian={'h_grid': [0.0, 0.5]}, fidelity={'h_grid': [0.2, 0.25, 0.3]},
        ))
        self.assertEqual(fine.fidelity.grid(fine.hamiltonian.h_grid), (0.2, 0.25, 0.3))
        self.assertEqual(fine.to_dict()['fidelity']['h_grid'], [0.2, 0.25, 0.3])

    def test_every_problem_is_reported(self):
        data = tiny_config(
            sampler={'n_burn': 40},
            ensemble={'m_keep': 9},
            similarity={'colour': 'red'},
        )
        data['schema_version'] = 2
        data['plots'] = {}
        with self.assertRaises(ValidationError) as ctx:
            ExperimentConfig.from_dict(data)
        messages = ' | '.join(ctx.exception.messages)
        for fragment in ("sampler: n_burn", "ensemble: m_keep", "similarity: unknown key 'colour'",
                         "unknown section 'plots'", "run.schema_version"):
            self.assertIn(fragment, messages)

    def test_epsilon_range_is_log_spaced(self):
        cfg = ExperimentConfig.from_dict(tiny_config(diffusion={'epsilon': {'start': 0.001, 'stop': 1.0, 'num': 4}}))
        np.testing.assert_allclose(cfg.diffusion.grid, [0.001, 0.01, 0.1, 1.0])
        self.assertEqual(cfg.to_dict()['diffusion']['epsilon'], {'start': 0.001, 'stop': 1.0, 'num': 4})

    def test_hash_ignores_name_and_output_dir(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        renamed = with_overrides(ExperimentConfig.from_dict(dict(tiny_config(), name='other')), output_dir='/elsewhere')
        self.assertEqual(config_hash(cfg), config_hash(renamed))
        self.assertNotEqual(config_hash(cfg), config_hash(with_overrides(cfg, seed=8)))

    def test_field_override_clears_the_grid(self):
        cfg = ExperimentConfig.from_dict(tiny_config(hamiltonian={'h_grid': [0.1, 0.2]}))
        point = with_overrides(cfg, h=0.2)
        self.assertEqual(point.hamiltonian.h, 0.2)
        self.assertEqual(point.hamiltonian.h_grid, ())

    def test_bundled_presets_are_valid(self):
        names = presets()
        self.assertEqual(len(names), 6)
        for name in names:
            cfg = load_config(name)
            self.assertEqual((cfg.lattice.lx, cfg.lattice.ly), (3, 3))
        sweep = load_config('field_sweep')
        self.assertEqual(sweep.hamiltonian.h_grid, (0.475, 0.55, 0.575, 0.6, 0.7))
        self.assertTrue(sweep.fidelity.enabled)
        self.assertEqual(len(sweep.fidelity.h_grid), 11)
        self.assertEqual((sweep.fidelity.h_grid[0], sweep.fidelity.h_grid[-1]), (0.45, 0.7))
        self.assertEqual(load_config('mixed_measure').similarity.fraction, 0.4)

    def test_unreadable_config(self):
        with self.assertRaises(ValidationError):
            load_config('/nonexistent/config.json')
        with self.assertRaises(ValidationError):
            loads_config('{not json')


class PipelineTests(TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def config(self, directory='run', **sections):
        return with_overrides(ExperimentConfig.from_dict(tiny_config(**sections)), output_dir=str(self.tmp / directory))

    def cached(self, manifest):
        return [s.cached for s in manifest.stages]

    def test_completed_run_writes_tables_and_records(self):
        manifest = run_pipeline(self.config())
        self.assertEqual(manifest.status, RunStatus.COMPLETED)
        self.assertEqual([s.name for s in manifest.stages], list(STAGES))

        rows = read_rows(manifest.root / 'tables' / 'embedding.csv')
        self.assertEqual(len(rows), 12)
        self.assertEqual(tuple(rows[0]), EMBEDDING_COLUMNS)
        self.assertTrue({int(r['cluster']) for r in rows} <= set(range(4)))
        self.assertTrue(all(abs(float(r['w1_bar'])) <= 1 + 1e-9 for r in rows))

        for row in read_rows(manifest.root / 'tables' / 'spectra.csv'):
            eigenvalues = [float(row[f'lambda_{i}']) for i in range(6)]
            self.assertAlmostEqual(eigenvalues[0], 1.0, places=10)
            self.assertTrue(all(a >= b for a, b in zip(eigenvalues, eigenvalues[1:])))

        for path, sha in manifest.digests().items():
            self.assertEqual(artifacts.file_digest(manifest.root / path), sha)

        run = ExperimentRun.objects.get(output_dir=manifest.output_dir)
        self.assertEqual(run.status, RunStatus.COMPLETED)
        self.assertEqual(run.completed_stages, len(STAGES))
        self.assertEqual(run.artifacts.count(), len(manifest.digests()))
        ensemble = EnsembleRecord.objects.get()
        self.assertEqual(ensemble.member_count, 12)
        self.assertFalse(MemberRecord.objects.filter(cluster__isnull=True).exists())
        self.assertFalse(MemberRecord.objects.filter(w1_bar__isnull=True).exists())

    def test_analytic_seeds_cover_all_sectors(self):
        manifest = run_pipeline(self.config(), record=False)
        seeds = artifacts.read_json(manifest.root / artifacts.SEEDS_JSON)['seeds']
        self.assertEqual({tuple(s['label']) for s in seeds}, {(1, 1), (1, -1), (-1, 1), (-1, -1)})
        self.assertEqual(manifest.summary['seed_sectors'], 4)
        self.assertEqual(manifest.summary['m_target'], 12)
        self.assertFalse(any('loop sectors' in w for w in manifest.warnings))

    def test_optimized_seeds_missing_sectors_warn(self):
        cfg = self.config(
            seeds={'source': 'vmc', 'n_initializations': 2, 'noise': 0.05},
            optimizer={'n_iterations': 2},
        )
        manifest = run_pipeline(cfg, record=False)
        self.assertEqual(manifest.stage('seeds').status, RunStatus.COMPLETED)
        seeds = artifacts.read_json(manifest.root / artifacts.SEEDS_JSON)['seeds']
        self.assertEqual([len(s['trace']) for s in seeds], [2, 2])
        self.assertTrue(any('of 4 loop sectors' in w for w in manifest.warnings))
        self.assertEqual(len(read_rows(manifest.root / 'tables' / 'energy_trace.csv')), 4)

    def test_rerun_reuses_every_stage(self):
        cfg = self.config()
        first = run_pipeline(cfg, record=False)
        tables = {p: (first.root / p).read_bytes() for p in first.digests() if p.startswith('tables/')}
        second = run_pipeline(cfg, record=False)
        self.assertEqual(self.cached(second), [True] * len(STAGES))
        self.assertEqual(first.digests(), second.digests())
        for path, payload in tables.items():
            self.assertEqual((second.root / path).read_bytes(), payload)

    def test_same_seed_reproduces_every_artifact(self):
        first = run_pipeline(self.config('a'), record=False)
        second = run_pipeline(self.config('b'), record=False)
        self.assertEqual(first.digests(), second.digests())

    def test_master_seed_reaches_the_chain_seed(self):
        first = run_pipeline(self.config('a'), record=False)
        second = run_pipeline(with_overrides(self.config('b'), seed=8), record=False)
        chain_seeds = [
            artifacts.read_json(m.root / artifacts.ENSEMBLE_DIR / 'metadata.json')['ensemble']['seed'] for m in (first, second)
        ]
        self.assertNotEqual(*chain_seeds)
        self.assertNotEqual(first.stage('ensemble').key, second.stage('ensemble').key)

    def test_deleted_artifact_regenerates_only_its_stage(self):
        cfg = self.config()
        first = run_pipeline(cfg, record=False)
        (first.root / artifacts.CLUSTERS_JSON).unlink()
        second = run_pipeline(cfg, record=False)
        self.assertEqual(self.cached(second), [True, True, True, True, False, True])
        self.assertEqual(first.digests(), second.digests())

    def test_forced_stage_recomputes_later_stages(self):
        cfg = self.config()
        run_pipeline(cfg, record=False)
        forced = run_pipeline(cfg, force=['diffusion'], record=False)
        self.assertEqual(self.cached(forced), [True, True, True, False, False, False])

    def test_unknown_forced_stage(self):
        with self.assertRaises(ValidationError):
            run_pipeline(self.config(), force=['plots'])

    def test_failing_stage_keeps_earlier_outputs(self):
        manifest = run_pipeline(self.config(clustering={'k': 20}))
        self.assertEqual(manifest.status, RunStatus.FAILED)
        self.assertEqual(manifest.stage('clustering').status, RunStatus.FAILED)
        self.assertIn('20 clusters', manifest.stage('clustering').error)
        self.assertEqual(manifest.stage('observables').status, RunStatus.PENDING)
        self.assertTrue((manifest.root / artifacts.SWEEP_JSON).is_file())
        self.assertFalse((manifest.root / artifacts.TABLES_DIR).exists())

        stored = RunManifest.load(manifest.root)
        self.assertEqual(stored.status, RunStatus.FAILED)
        run = ExperimentRun.objects.get(output_dir=manifest.output_dir)
        self.assertEqual(run.status, RunStatus.FAILED)
        self.assertEqual(run.completed_stages, 4)

    def test_manifest_round_trip(self):
        manifest = run_pipeline(self.config(), record=False)
        stored = RunManifest.load(manifest.root)
        self.assertEqual(stored.digests(), manifest.digests())
        self.assertEqual([s.status for s in stored.stages], [RunStatus.COMPLETED] * len(STAGES))
        self.assertEqual(stored.versions, manifest.versions)

    def test_record_can_be_skipped(self):
        run_pipeline(self.config(), record=False)
        self.assertFalse(ExperimentRun.objects.exists())


class FieldSweepTests(TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def config(self, **sections):
        sections.setdefault('hamiltonian', {'h_grid': [0.0, 0.2]})
        return with_overrides(ExperimentConfig.from_dict(tiny_config(**sections)), output_dir=str(self.tmp / 'sweep'))

    def test_one_pipeline_per_field_value(self):
        manifest = run_field_sweep(self.config(), record=False)
        self.assertEqual(manifest.kind, 'sweep')
        self.assertEqual([s.name for s in manifest.stages], ['h00', 'h01'])
        self.assertEqual(manifest.status, RunStatus.COMPLETED)
        point = RunManifest.load(manifest.root / 'h01')
        self.assertEqual(point.status, RunStatus.COMPLETED)

        rows = read_rows(manifest.root / 'tables' / 'field_spectra.csv')
        self.assertEqual([float(r['h']) for r in rows], [0.0, 0.2])
        self.assertEqual(float(rows[0]['epsilon']), 0.05)
        self.assertIn('lambda_5', rows[0])

    def test_points_fail_independently(self):
        manifest = run_field_sweep(self.config(clustering={'k': 20}))
        self.assertEqual(len(manifest.points), 2)
        self.assertEqual([p['status'] for p in manifest.points], ['failed', 'failed'])
        self.assertEqual(read_rows(manifest.root / 'tables' / 'field_spectra.csv'), [])
        self.assertEqual(ExperimentRun.objects.filter(kind='sweep').get().status, RunStatus.FAILED)

    def test_fidelity_table(self):
        cfg = self.config(fidelity={'enabled': True}, optimizer={'n_iterations': 3})
        manifest = run_field_sweep(cfg, record=False)
        rows = read_rows(manifest.root / 'tables' / 'fidelity.csv')
        self.assertEqual(len(rows), 1)
        self.assertEqual((float(rows[0]['h']), float(rows[0]['h_next'])), (0.0, 0.2))
        if rows[0]['fidelity']:
            self.assertTrue(0.0 <= float(rows[0]['fidelity']) <= 1.0 + 1e-6)

    def test_fidelity_scans_its_own_grid(self):
        cfg = self.config(fidelity={'enabled': True, 'h_grid': [0.0, 0.05, 0.1]}, optimizer={'n_iterations': 2})
        manifest = run_field_sweep(cfg, record=False)
        self.assertEqual([s.name for s in manifest.stages], ['h00', 'h01', 'fidelity'])
        rows = read_rows(manifest.root / 'tables' / 'fidelity.csv')
        self.assertEqual([(float(r['h']), float(r['h_next'])) for r in rows], [(0.0, 0.05), (0.05, 0.1)])

    def test_fidelity_points_start_from_nearest_sweep_state(self):
        cfg = ExperimentConfig.from_dict(tiny_config(
            fidelity={'enabled': True, 'h_grid': [0.0, 0.1, 0.9, 1.0]}, optimizer={'n_iterations': 1},
        ))
        lat = cfg.lattice.build()
        anchors = [(0.0, toric_ground_state_params(lat)), (1.0, polarized_params(lat))]
        directory = self.tmp / 'fidelity'
        directory.mkdir()
        _, warnings, summary = _fidelity(cfg, directory, anchors)
        self.assertEqual(warnings, [])
        points = json.loads((directory / 'fidelity.json').read_text())['points']
        self.assertAlmostEqual(points[0]['fidelity'], 1.0, places=10)
        self.assertLess(points[1]['fidelity'], 0.5)
        self.assertAlmostEqual(points[2]['fidelity'], 1.0, places=10)
        self.assertEqual((summary['fidelity_minimum']['h'], summary['fidelity_minimum']['h_next']), (0.1, 0.9))

    def test_sweep_needs_a_grid(self):
        with self.assertRaises(ValidationError):
            run_field_sweep(self.config(hamiltonian={'h_grid': []}))


TORIC_NETWORK_EPSILON = [0.004, 0.005, 0.006, 0.008]
TORIC_OVERLAP_EPSILON = [0.04, 0.05, 0.06, 0.07]
POLARIZED_EPSILON = np.geomspace(0.02, 1.0, 8)


class PhaseDetectionTests(TestCase):
    """
    Small seeded ensembles: one chain per loop sector at zero field, all
    chains from the polarized state at h=1.
    """

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def run_toric(self, measure, epsilon, **similarity):
        cfg = ExperimentConfig.from_dict(tiny_config(
            similarity={'measure': measure, **similarity},
            diffusion={'epsilon': epsilon, 'min_persistence': 3},
        ))
        manifest = run_pipeline(with_overrides(cfg, output_dir=str(self.tmp / measure)), record=False)
        self.assertEqual(manifest.status, RunStatus.COMPLETED)
        return manifest

    def polarized_members(self):
        lat = build_lattice(2, 2)
        ec = EnsembleConfig(temperature=0.1, k_chains=4, n_steps=6, m_keep=3, seeds=(polarized_params(lat),), seed=11)
        sampler = SamplerConfig(n_chains=2, n_steps=40, n_batches=4, seed=3)
        ensemble = generate(lat, ToricParams(h=1.0), ec, sampler)
        return lat, [m.params for m in ensemble.members]

    def test_network_similarity_finds_four_sectors(self):
        manifest = self.run_toric('n', TORIC_NETWORK_EPSILON)
        self.assertEqual(manifest.summary['sector_count'], 4)
        sweep = artifacts.read_json(manifest.root / artifacts.SWEEP_JSON)
        first, last = sweep['sector_range']
        inside = [row for row in sweep['rows'] if first <= row['epsilon'] <= last]
        self.assertGreaterEqual(len(inside), 3)
        for row in inside:
            self.assertEqual(sum(value > 1 - 1e-3 for value in row['eigenvalues']), 4)
            self.assertGreater(row['gap'], 0.1)
        self.assertEqual(manifest.summary['label_agreement'], 1.0)

    def test_overlap_similarity_finds_the_same_sectors(self):
        by_network = self.run_toric('n', TORIC_NETWORK_EPSILON)
        by_overlap = self.run_toric('q', TORIC_OVERLAP_EPSILON)
        self.assertEqual(by_overlap.summary['sector_count'], 4)
        self.assertEqual(by_overlap.summary['label_agreement'], 1.0)
        labels = [artifacts.read_json(m.root / artifacts.CLUSTERS_JSON)['labels'] for m in (by_network, by_overlap)]
        self.assertEqual(label_agreement(*labels), 1.0)

    def test_mixed_measure_keeps_four_sectors(self):
        manifest = self.run_toric('mixed', TORIC_NETWORK_EPSILON, fraction=0.4)
        self.assertEqual(manifest.summary['sector_count'], 4)
        self.assertEqual(manifest.summary['label_agreement'], 1.0)

    def test_polarized_phase_has_one_sector(self):
        lat, members = self.polarized_members()
        self.assertEqual(len(members), 12)
        sweep = epsilon_sweep(overlap_matrix(lat, members), POLARIZED_EPSILON, max_sectors=8)
        self.assertEqual(sweep.sector_count, 1)
        self.assertIsNone(sweep.sector_range)

    def test_mixed_measure_in_polarized_phase_has_one_sector(self):
        lat, members = self.polarized_members()
        mixed = similarity_mixed(lat, members, 0.4, seed=5)
        self.assertEqual(epsilon_sweep(mixed, POLARIZED_EPSILON, max_sectors=8).sector_count, 1)


@skipUnless(os.environ.get('TORIC_DM_PRESET_RUNS'), "bundled presets on 3x3 take minutes; set TORIC_DM_PRESET_RUNS=1")
class PresetRunTests(TestCase):
    """The bundled 3x3 presets end to end."""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def preset(self, name):
        return with_overrides(load_config(name), output_dir=str(self.tmp / name))

    def test_zero_field_presets_find_four_sectors(self):
        labels = []
        for name in ('topological_sn', 'topological_sq'):
            manifest = run_pipeline(self.preset(name), record=False)
            self.assertEqual(manifest.summary['sector_count'], 4, name)
            self.assertEqual(manifest.summary['label_agreement'], 1.0, name)
            labels.append(artifacts.read_json(manifest.root / artifacts.CLUSTERS_JSON)['labels'])
        self.assertEqual(label_agreement(*labels), 1.0)

    def test_high_temperature_merges_sectors(self):
        self.assertEqual(run_pipeline(self.preset('high_temperature'), record=False).summary['sector_count'], 1)

    def test_trivial_phase_has_one_sector(self):
        self.assertEqual(run_pipeline(self.preset('trivial_phase'), record=False).summary['sector_count'], 1)

    def test_field_sweep_transition_and_fidelity_dip(self):
        manifest = run_field_sweep(self.preset('field_sweep'), record=False)
        degenerate = [
            artifacts.read_json(manifest.root / p['output_dir'] / artifacts.SWEEP_JSON)['report']['degeneracy_count'] == 4
            for p in manifest.points
        ]
        self.assertIn(degenerate, [
            [True, False, False, False, False],
            [True, True, False, False, False],
            [True, True, True, False, False],
        ])
        self.assertTrue(0.52 <= manifest.summary['fidelity_minimum']['h'] <= 0.62)

    def test_mixed_measure_across_the_transition(self):
        manifest = run_field_sweep(self.preset('mixed_measure'), record=False)
        self.assertEqual(manifest.summary['sector_counts'], {'0.475': 4, '0.7': 1})


class EmitterTests(SimpleTestCase):

    def test_cell_formatting(self):
        self.assertEqual(cell(0.1), '0.10000000000000001')
        self.assertEqual(cell(None), '')
        self.assertEqual(cell(True), '1')
        self.assertEqual(cell(3), '3')

    def test_short_spectra_are_padded(self):
        row = {'epsilon': 0.1, 'eigenvalues': [1.0, 0.5], 'degeneracy_count': 1, 'gap': 0.5}
        self.assertEqual(spectrum_cells(row, 4), [0.1, 1.0, 0.5, None, None, 1, 0.5])

    def test_incomplete_run_is_refused(self):
        manifest = RunManifest('x', 'run', '', '/nonexistent', stages=[StageOutcome(s) for s in STAGES])
        with self.assertRaises(StageFailed):
            emit_tables(manifest)


class CommandTests(TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def write_config(self, **sections):
        path = self.tmp / 'config.json'
        path.write_text(json.dumps(tiny_config(**sections)))
        return str(path)

    def test_validate(self):
        out = StringIO()
        call_command('validate', config=self.write_config(), stdout=out)
        self.assertIn('valid', out.getvalue())
        self.assertIn('config hash', out.getvalue())

    def test_invalid_config_exits_with_code_2(self):
        path = self.write_config(diffusion={'epsilon': []})
        for command in ('validate', 'run', 'sweep'):
            with self.assertRaises(CommandError) as ctx:
                call_command(command, config=path, stdout=StringIO())
            self.assertEqual(ctx.exception.returncode, 2)

    def test_failed_stage_exits_with_code_3(self):
        path = self.write_config(clustering={'k': 20})
        with self.assertRaises(CommandError) as ctx:
            call_command('run', config=path, output_dir=str(self.tmp / 'run'), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn('clustering', str(ctx.exception))

    def test_run_then_emit(self):
        path = self.write_config()
        out = StringIO()
        call_command('run', config=path, output_dir=str(self.tmp / 'run'), seed=3, record=False, stdout=out)
        self.assertIn('sector count', out.getvalue())
        self.assertEqual(loads_config((self.tmp / 'run' / 'config.json').read_text()).seed, 3)

        embedding = self.tmp / 'run' / 'tables' / 'embedding.csv'
        before = embedding.read_bytes()
        embedding.unlink()
        out = StringIO()
        call_command('emit', output_dir=str(self.tmp / 'run'), stdout=out)
        self.assertIn('table(s) written', out.getvalue())
        self.assertEqual(embedding.read_bytes(), before)

    def test_emit_without_a_run(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('emit', output_dir=str(self.tmp / 'missing'), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)
