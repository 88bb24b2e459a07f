"""
End-to-end runs: seeds -> ensemble -> similarity -> diffusion -> clustering
-> observables, then the CSV tables.

Every stage writes into its own subdirectory of the run directory, reads its
inputs from the directories of earlier stages and leaves a ``stage.json``
with its key. The key hashes the config sections the stage reads, the master
seed and the artifact digests of every stage before it; a stage whose key
matches and whose artifacts are intact is reused instead of recomputed.
"""
from __future__ import annotations

import hashlib
import logging
import math
import platform
import shutil
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import django
import numpy as np
import scipy
import sklearn
from django.core.exceptions import ValidationError
from typing_extensions import Self

from ensembles.generation import ChainAborted, generate
from ensembles.storage import load_ensemble, save_ensemble, split_params
from spectra import diffmap
from spectra.exceptions import DiffusionError, SimilarityError
from spectra.similarity import (
    euclidean_matrix, load_similarity, network_matrix, overlap_matrix, save_similarity, similarity_mixed,
    string_matrix,
)
from wavefunctions import exact
from wavefunctions.exceptions import (
    ConfigurationError, EnumerationBudgetError, LatticeError, OptimizationDiverged, SamplerError,
    ZeroAmplitudeError, ZeroNormError,
)
from wavefunctions.hamiltonian import Energy, averaged_wilson
from wavefunctions.rbm import random_params, sector_params
from wavefunctions.vmc import derive_seed, estimate, fidelity_scan, optimize

from . import artifacts
from .config import ExperimentConfig, config_hash, digest, resolve_output_dir, save_config, with_overrides
from .models import RunStatus

logger = logging.getLogger(__name__)

STAGES = ('seeds', 'ensemble', 'similarity', 'diffusion', 'clustering', 'observables')

# Config sections read by each stage
STAGE_SECTIONS = {
    'seeds': ('lattice', 'hamiltonian', 'sampler', 'optimizer', 'seeds', 'observables'),
    'ensemble': ('sampler', 'ensemble'),
    'similarity': ('sampler', 'similarity'),
    'diffusion': ('diffusion',),
    'clustering': ('diffusion', 'clustering'),
    'observables': ('sampler', 'observables'),
}

# Sub-stream keys under the master seed
SEED_STREAM = 1
ENSEMBLE_STREAM = 2
ENERGY_STREAM = 3
SIMILARITY_STREAM = 4
CLUSTER_STREAM = 5
OBSERVABLE_STREAM = 6
FIDELITY_STREAM = 7

SECTOR_COUNT = 4


class StageFailed(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


DOMAIN_ERRORS = (
    LatticeError, ConfigurationError, ZeroAmplitudeError, ZeroNormError, EnumerationBudgetError,
    SamplerError, OptimizationDiverged, ChainAborted, SimilarityError, DiffusionError, StageFailed, OSError,
)


@dataclass
class StageOutcome:
    name: str
    status: str = RunStatus.PENDING
    key: str = ''
    cached: bool = False
    wall_seconds: float = 0.0
    error: str = ''
    artifacts: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    name: str
    kind: str
    config_hash: str
    output_dir: str
    stages: list[StageOutcome] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    points: list[dict] = field(default_factory=list)
    tables: list[dict] = field(default_factory=list)

    @property
    def root(self) -> Path:
        return Path(self.output_dir)

    @property
    def status(self) -> str:
        statuses = [s.status for s in self.stages]
        if RunStatus.FAILED in statuses:
            return RunStatus.FAILED
        if statuses and all(s == RunStatus.COMPLETED for s in statuses):
            return RunStatus.COMPLETED
        return RunStatus.RUNNING if RunStatus.COMPLETED in statuses else RunStatus.PENDING

    def stage(self, name: str) -> StageOutcome:
        for outcome in self.stages:
            if outcome.name == name:
                return outcome
        raise KeyError(name)

    def failures(self) -> list[StageOutcome]:
        return [s for s in self.stages if s.status == RunStatus.FAILED]

    def digests(self) -> dict[str, str]:
        """Content digest of every listed file, keyed by path relative to the run directory."""
        entries = [a for s in self.stages for a in s.artifacts] + self.tables
        return {entry['path']: entry['sha256'] for entry in entries}

    def to_dict(self) -> dict:
        data = asdict(self)
        data['status'] = str(self.status)
        for stage in data['stages']:
            stage['status'] = str(stage['status'])
        return data

    @classmethod
    def from_dict(cls, data: dict) -> Self:
        data = dict(data)
        data.pop('status', None)
        stages = [StageOutcome(**stage) for stage in data.pop('stages')]
        return cls(stages=stages, **data)

    def save(self) -> Path:
        return artifacts.write_json(self.root / artifacts.MANIFEST, self.to_dict())

    @classmethod
    def load(cls, directory) -> Self:
        path = Path(directory) / artifacts.MANIFEST
        if not path.is_file():
            raise StageFailed('manifest', f"no run manifest at {path}")
        return cls.from_dict(artifacts.read_json(path))


def versions() -> dict:
    return {
        'python': platform.python_version(),
        'django': django.get_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'scikit-learn': sklearn.__version__,
    }


def execute_stage(outcome: StageOutcome, root: Path, body, reuse: bool = True, reporter=None) -> StageOutcome:
    """
    Run ``body(directory) -> (paths, warnings, summary)`` for one stage, or
    reuse the stored result when ``reuse`` is set and the stored key and
    artifact digests still match. Domain errors mark the stage failed; files
    written before the failure stay in place.
    """
    report = reporter or (lambda message: None)
    directory = root / outcome.name
    stored = directory / artifacts.STAGE_FILE
    if reuse and stored.is_file():
        previous = artifacts.read_json(stored)
        if previous['key'] == outcome.key and artifacts.intact(previous['artifacts'], root):
            outcome.status = RunStatus.COMPLETED
            outcome.cached = True
            outcome.artifacts = previous['artifacts']
            outcome.warnings = previous['warnings']
            outcome.summary = previous['summary']
            report(f"{outcome.name}: cached")
            return outcome

    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    report(f"{outcome.name}: running")
    started = time.perf_counter()
    try:
        paths, warnings, summary = body(directory)
    except DOMAIN_ERRORS as exc:
        outcome.status = RunStatus.FAILED
        outcome.error = str(exc)
        logger.error("stage %s failed in %s: %s", outcome.name, root, exc)
    else:
        outcome.status = RunStatus.COMPLETED
        outcome.artifacts = artifacts.describe(paths, root)
        outcome.warnings = list(warnings)
        outcome.summary = summary
        artifacts.write_json(stored, {
            'key': outcome.key,
            'artifacts': outcome.artifacts,
            'warnings': outcome.warnings,
            'summary': outcome.summary,
        })
    finally:
        outcome.wall_seconds = time.perf_counter() - started
    for warning in outcome.warnings:
        logger.warning("%s: %s", outcome.name, warning)
    report(f"{outcome.name}: {str(outcome.status)} in {outcome.wall_seconds:.1f}s")
    return outcome


def sector_label(w1: float, w2: float) -> tuple[int, int]:
    return (1 if w1 >= 0 else -1, 1 if w2 >= 0 else -1)


def sector_index(label) -> int:
    """0..3 for the labels (+,+), (+,-), (-,+), (-,-)."""
    return 2 * (label[0] < 0) + (label[1] < 0)


class Pipeline:
    def __init__(self, cfg: ExperimentConfig, initial_seeds=None, force=(), reporter=None):
        unknown = set(force) - set(STAGES)
        if unknown:
            raise ValidationError(f"unknown stage(s) to force: {', '.join(sorted(unknown))}")
        self.cfg = cfg
        self.root = resolve_output_dir(cfg).resolve()
        self.lattice = cfg.lattice.build()
        self.tp = cfg.hamiltonian.params()
        self.initial_seeds = list(initial_seeds or [])
        self.forced_from = min((STAGES.index(s) for s in force), default=len(STAGES))
        self.reporter = reporter

    def stage_key(self, name: str, upstream: str) -> str:
        payload = {
            'stage': name,
            'seed': self.cfg.seed,
            'sections': {section: self.cfg.section(section) for section in STAGE_SECTIONS[name]},
            'upstream': upstream,
        }
        if name == 'seeds' and self.cfg.seeds.source == 'vmc' and self.initial_seeds:
            payload['initial_seeds'] = hashlib.sha256(b''.join(p.to_bytes() for p in self.initial_seeds)).hexdigest()
        return digest(payload)

    def run(self, record: bool = True) -> RunManifest:
        from .emitters import emit_tables
        from .records import record_run

        self.root.mkdir(parents=True, exist_ok=True)
        save_config(self.cfg, self.root / artifacts.CONFIG)
        manifest = RunManifest(
            name=self.cfg.name,
            kind='run',
            config_hash=config_hash(self.cfg),
            output_dir=str(self.root),
            stages=[StageOutcome(name) for name in STAGES],
            versions=versions(),
        )
        upstream = ''
        for position, outcome in enumerate(manifest.stages):
            outcome.key = self.stage_key(outcome.name, upstream)
            body = getattr(self, f'_{outcome.name}')
            execute_stage(outcome, self.root, body, reuse=position < self.forced_from, reporter=self.reporter)
            manifest.save()
            if outcome.status == RunStatus.FAILED:
                break
            upstream = digest([upstream, outcome.artifacts])

        manifest.warnings = [f"{s.name}: {w}" for s in manifest.stages for w in s.warnings]
        manifest.summary = self._summary(manifest)
        if manifest.status == RunStatus.COMPLETED:
            paths = emit_tables(manifest)
            manifest.tables = artifacts.describe(paths, self.root)
        manifest.save()
        if record:
            record_run(manifest)
        logger.info("run %s finished %s in %s", manifest.name, manifest.status, manifest.output_dir)
        return manifest

    def _summary(self, manifest: RunManifest) -> dict:
        ec = self.cfg.ensemble
        summary = {'m_target': ec.k_chains * math.ceil(ec.keep / ec.thinning)}
        for outcome in manifest.stages:
            summary.update(outcome.summary)
        return summary

    def _exact_observables(self) -> bool:
        mode = self.cfg.observables.mode
        if mode == 'auto':
            return self.lattice.n_spins <= exact.max_spins()
        return mode == 'exact'

    def _wilson(self, params, *keys) -> tuple[float, float]:
        if self._exact_observables():
            return averaged_wilson(self.lattice, params)
        sampler = replace(self.cfg.sampler, seed=derive_seed(self.cfg.seed, OBSERVABLE_STREAM, *keys))
        return averaged_wilson(self.lattice, params, sampler)

    def load_seeds(self) -> list:
        lat = self.lattice
        return split_params((self.root / artifacts.SEEDS_BIN).read_bytes(), lat.lx, lat.ly)

    # Stages

    def _seeds(self, directory: Path):
        cfg, lat = self.cfg, self.lattice
        bases = [sector_params(lat, a, b) for a in (False, True) for b in (False, True)]
        states, records, warnings = [], [], []
        if cfg.seeds.source == 'analytic':
            for index, params in enumerate(bases):
                sc = replace(cfg.sampler, seed=derive_seed(cfg.seed, SEED_STREAM, index))
                energy = estimate(lat, params, sc, Energy(self.tp))
                states.append(params)
                records.append({'base': index, 'energy': [energy.mean, energy.std_error], 'trace': [], 'converged': True})
        else:
            for index in range(cfg.seeds.n_initializations):
                stream = derive_seed(cfg.seed, SEED_STREAM, index)
                if self.initial_seeds:
                    init = self.initial_seeds[index % len(self.initial_seeds)]
                else:
                    init = random_params(lat, stream, cfg.seeds.noise, bases[index % len(bases)])
                try:
                    result = optimize(lat, init, self.tp, replace(cfg.sampler, seed=stream), cfg.optimizer)
                except (OptimizationDiverged, SamplerError) as exc:
                    warnings.append(f"initialization {index} dropped: {exc}")
                    continue
                states.append(result.params)
                records.append({
                    'base': index % len(bases),
                    'energy': [result.energy.mean, result.energy.std_error],
                    'trace': [[e.mean, e.std_error] for e in result.trace],
                    'converged': result.converged,
                })
        if not states:
            raise StageFailed('seeds', "no initialization produced a seed state")

        for seed_id, (params, entry) in enumerate(zip(states, records)):
            w1, w2 = self._wilson(params, 0, seed_id)
            entry.update(seed_id=seed_id, w1_bar=w1, w2_bar=w2, label=list(sector_label(w1, w2)))
        labels = {tuple(entry['label']) for entry in records}
        if len(labels) < SECTOR_COUNT:
            warnings.append(f"seeds cover {len(labels)} of {SECTOR_COUNT} loop sectors")

        paths = [directory / 'seeds.bin', directory / 'seeds.json']
        paths[0].write_bytes(b''.join(p.to_bytes() for p in states))
        artifacts.write_json(paths[1], {'source': cfg.seeds.source, 'seeds': records})
        return paths, warnings, {'seed_sectors': len(labels)}

    def _ensemble(self, directory: Path):
        cfg = self.cfg
        seeds = self.load_seeds()
        ec = replace(cfg.ensemble, seeds=tuple(seeds), seed=derive_seed(cfg.seed, ENSEMBLE_STREAM))
        sampler = replace(cfg.sampler, seed=derive_seed(cfg.seed, ENERGY_STREAM))
        ensemble = generate(self.lattice, self.tp, ec, sampler)
        provenance = [f"{artifacts.SEEDS_BIN}#{i}" for i in range(len(seeds))]
        paths = save_ensemble(ensemble, directory, provenance)
        return paths, [], {'n_members': len(ensemble)}

    def _similarity(self, directory: Path):
        cfg, lat = self.cfg, self.lattice
        params = [m.params for m in load_ensemble(self.root / artifacts.ENSEMBLE_DIR).members]
        seed = derive_seed(cfg.seed, SIMILARITY_STREAM)
        mode = cfg.similarity.overlap
        sampler = None if mode == 'exact' else replace(cfg.sampler, seed=seed)
        sampled = mode == 'sampled'
        measure = cfg.similarity.measure
        if measure == 'q':
            s = overlap_matrix(lat, params, sampler, sampled)
        elif measure == 'n':
            s = network_matrix(lat, params)
        elif measure == 'str':
            s = string_matrix(lat, params, cfg.similarity.n_g, seed)
        elif measure == 'eu':
            s = euclidean_matrix(params)
        else:
            s = similarity_mixed(lat, params, cfg.similarity.fraction, seed, sampler, sampled)
        paths = save_similarity(s, self.root / artifacts.SIMILARITY_BASE, cfg.section('similarity'))
        return paths, s.warnings, {'measure': s.tag}

    def _diffusion(self, directory: Path):
        dc = self.cfg.diffusion
        s = load_similarity(self.root / artifacts.SIMILARITY_BASE)
        sweep = diffmap.epsilon_sweep(
            s, dc.grid, dc.near_one_delta, dc.gap_threshold, dc.min_persistence, dc.max_sectors, dc.n_components,
        )
        report = diffmap.diffusion_map(s, dc.report_epsilon, dc.near_one_delta, dc.n_components)
        payload = {
            'sector_count': sweep.sector_count,
            'sector_range': list(sweep.sector_range) if sweep.sector_range else None,
            'n_eigenvalues': dc.n_eigenvalues,
            'rows': [_spectrum_row(row, dc.n_eigenvalues) for row in sweep.rows],
            'report': _spectrum_row(report, dc.n_eigenvalues),
        }
        path = artifacts.write_json(directory / 'sweep.json', payload)
        summary = {'sector_count': sweep.sector_count, 'sector_range': payload['sector_range']}
        return [path], sweep.warnings, summary

    def _clustering(self, directory: Path):
        cfg = self.cfg
        sweep = artifacts.read_json(self.root / artifacts.SWEEP_JSON)
        epsilon = cfg.diffusion.cluster_epsilon
        if epsilon is None and sweep['sector_range']:
            epsilon = math.sqrt(sweep['sector_range'][0] * sweep['sector_range'][1])
        if epsilon is None:
            epsilon = cfg.diffusion.report_epsilon
        s = load_similarity(self.root / artifacts.SIMILARITY_BASE)
        result = diffmap.diffusion_map(s, epsilon, cfg.diffusion.near_one_delta, cfg.diffusion.n_components)
        seed = derive_seed(cfg.seed, CLUSTER_STREAM) % 2 ** 32
        clusters = diffmap.kmeans_embed(result, cfg.clustering.k, cfg.clustering.n_restarts, seed)
        payload = {
            'epsilon': epsilon,
            'k': clusters.k,
            'labels': clusters.labels.tolist(),
            'sizes': clusters.sizes().tolist(),
            'inertia': clusters.inertia,
            'embedding': result.embedding.tolist(),
        }
        path = artifacts.write_json(directory / 'clusters.json', payload)
        return [path], [], {'cluster_epsilon': epsilon, 'cluster_sizes': payload['sizes']}

    def _observables(self, directory: Path):
        if not self.cfg.observables.wilson:
            path = artifacts.write_json(directory / 'wilson.json', {'mode': 'off', 'members': [], 'agreement': None})
            return [path], [], {}
        exact_mode = self._exact_observables()
        ensemble = load_ensemble(self.root / artifacts.ENSEMBLE_DIR)
        members = []
        for member_id, member in enumerate(ensemble.members):
            w1, w2 = self._wilson(member.params, 1, member_id)
            members.append({'member_id': member_id, 'w1_bar': w1, 'w2_bar': w2, 'label': list(sector_label(w1, w2))})
        clusters = artifacts.read_json(self.root / artifacts.CLUSTERS_JSON)
        agreement = diffmap.label_agreement(clusters['labels'], [sector_index(m['label']) for m in members])
        payload = {'mode': 'exact' if exact_mode else 'sampled', 'members': members, 'agreement': agreement}
        path = artifacts.write_json(directory / 'wilson.json', payload)
        return [path], [], {'label_agreement': agreement}


def _spectrum_row(result: diffmap.DiffusionResult, n_eigenvalues: int) -> dict:
    return {
        'epsilon': result.epsilon,
        'eigenvalues': result.eigenvalues[:n_eigenvalues].tolist(),
        'degeneracy_count': result.degeneracy_count,
        'gap': result.gap,
    }


def run_pipeline(cfg: ExperimentConfig, force=(), reporter=None, record: bool = True, initial_seeds=None) -> RunManifest:
    return Pipeline(cfg, initial_seeds=initial_seeds, force=force, reporter=reporter).run(record=record)


def run_field_sweep(cfg: ExperimentConfig, force=(), reporter=None, record: bool = True) -> RunManifest:
    """
    One pipeline per field value in ``hamiltonian.h_grid``, in subdirectories
    ``h00``, ``h01``, ..., with the seeds of each point warm-started from the
    previous point's. A failing point does not stop the sweep. With
    ``fidelity.enabled`` the fidelity between neighbouring optimized states is
    scanned along ``fidelity.h_grid`` (default: the sweep grid), every scan
    point starting from the first seed of the nearest completed sweep point.
    """
    from .emitters import emit_tables
    from .records import record_run

    grid = list(cfg.hamiltonian.h_grid)
    if not grid:
        raise ValidationError("a field sweep needs a non-empty hamiltonian.h_grid")
    unknown = set(force) - set(STAGES) - {'fidelity'}
    if unknown:
        raise ValidationError(f"unknown stage(s) to force: {', '.join(sorted(unknown))}")
    root = resolve_output_dir(cfg).resolve()
    root.mkdir(parents=True, exist_ok=True)
    save_config(cfg, root / artifacts.CONFIG)
    manifest = RunManifest(name=cfg.name, kind='sweep', config_hash=config_hash(cfg), output_dir=str(root), versions=versions())

    previous = None
    anchors = []
    point_force = tuple(s for s in force if s != 'fidelity')
    for index, h in enumerate(grid):
        label = f"h{index:02d}"
        point_cfg = replace(with_overrides(cfg, output_dir=str(root / label), h=h), name=f"{cfg.name}-{label}")
        if reporter:
            reporter(f"{label}: h={h:g}")
        started = time.perf_counter()
        pipeline = Pipeline(point_cfg, initial_seeds=previous, force=point_force, reporter=reporter)
        point = pipeline.run(record=record)
        failures = point.failures()
        manifest.stages.append(StageOutcome(
            name=label,
            status=point.status,
            key=point.config_hash,
            cached=all(s.cached for s in point.stages),
            wall_seconds=time.perf_counter() - started,
            error='; '.join(f"{s.name}: {s.error}" for s in failures),
            warnings=point.warnings,
            summary={'h': h, 'sector_count': point.summary.get('sector_count')},
        ))
        manifest.points.append({'index': index, 'h': h, 'output_dir': label, 'status': str(point.status)})
        if point.stage('seeds').status == RunStatus.COMPLETED:
            previous = pipeline.load_seeds()
            anchors.append((h, previous[0]))

    if cfg.fidelity.enabled:
        outcome = StageOutcome('fidelity', key=digest({
            'stage': 'fidelity',
            'seed': cfg.seed,
            'sections': {s: cfg.section(s) for s in ('lattice', 'hamiltonian', 'sampler', 'optimizer', 'fidelity')},
            'anchors': [[h, hashlib.sha256(params.to_bytes()).hexdigest()] for h, params in anchors],
        }))
        manifest.stages.append(outcome)
        execute_stage(outcome, root, lambda directory: _fidelity(cfg, directory, anchors), 'fidelity' not in force, reporter)

    manifest.warnings = [f"{s.name}: {w}" for s in manifest.stages for w in s.warnings]
    manifest.summary = {
        'sector_counts': {f"{p['h']:g}": s.summary.get('sector_count') for p, s in zip(manifest.points, manifest.stages)},
    }
    if cfg.fidelity.enabled and manifest.stage('fidelity').status == RunStatus.COMPLETED:
        manifest.summary.update(manifest.stage('fidelity').summary)
    paths = emit_tables(manifest)
    manifest.tables = artifacts.describe(paths, root)
    manifest.save()
    if record:
        record_run(manifest)
    return manifest


def _fidelity(cfg: ExperimentConfig, directory: Path, anchors=()):
    lat = cfg.lattice.build()
    sampler = replace(cfg.sampler, seed=derive_seed(cfg.seed, FIDELITY_STREAM))
    grid = cfg.fidelity.grid(cfg.hamiltonian.h_grid)
    points = fidelity_scan(lat, grid, cfg.hamiltonian.params(), sector_params(lat), sampler, cfg.optimizer, anchors)
    rows = [asdict(p) for p in points]
    valid = [p for p in points if p.fidelity is not None]
    summary = {}
    warnings = [f"h={p.h:g}: {p.error}" for p in points if p.error]
    if valid:
        lowest = min(valid, key=lambda p: p.fidelity)
        summary = {'fidelity_minimum': {'h': lowest.h, 'h_next': lowest.h_next, 'fidelity': lowest.fidelity}}
    path = artifacts.write_json(directory / 'fidelity.json', {'points': rows, **summary})
    return [path], warnings, summary
