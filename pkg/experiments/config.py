"""
Experiment configuration: a versioned JSON document with one section per
stage, parsed into frozen dataclasses. Serialization is canonical (sorted
keys, two-space indent, trailing newline), so dumping a parsed config
reproduces the file byte for byte.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from typing_extensions import Self

from ensembles.generation import EnsembleConfig
from wavefunctions.exceptions import ConfigurationError
from wavefunctions.hamiltonian import ToricParams
from wavefunctions.lattice import Lattice, build_lattice
from wavefunctions.vmc import OptimizerConfig, SamplerConfig

from .forms import SCHEMA_VERSION, clean_config


@dataclass(frozen=True)
class LatticeSection:
    lx: int = 3
    ly: int = 3

    def build(self) -> Lattice:
        return build_lattice(self.lx, self.ly)


@dataclass(frozen=True)
class HamiltonianSection:
    j_p: float = 1.0
    j_s: float = 1.0
    h: float = 0.0
    h_grid: tuple[float, ...] = ()

    def params(self, h: float | None = None) -> ToricParams:
        return ToricParams(self.j_p, self.j_s, self.h if h is None else h)


@dataclass(frozen=True)
class SeedsSection:
    source: str = 'vmc'
    n_initializations: int = 4
    noise: float = 0.3


@dataclass(frozen=True)
class SimilaritySection:
    measure: str = 'n'
    n_g: int = 1000
    fraction: float = 0.4
    overlap: str = 'auto'


@dataclass(frozen=True)
class DiffusionSection:
    epsilon: tuple[float, ...] | None = None
    epsilon_range: tuple[float, float, int] | None = (1e-3, 1.0, 30)
    near_one_delta: float = 1e-3
    gap_threshold: float = 0.1
    min_persistence: int = 3
    max_sectors: int | None = 8
    cluster_epsilon: float | None = None
    report_epsilon: float = 0.05
    n_eigenvalues: int = 10
    n_components: int = 3

    @property
    def grid(self) -> np.ndarray:
        if self.epsilon is not None:
            return np.array(self.epsilon, dtype=np.float64)
        start, stop, num = self.epsilon_range
        return np.logspace(np.log10(start), np.log10(stop), num)


@dataclass(frozen=True)
class ClusteringSection:
    k: int = 4
    n_restarts: int = 32


@dataclass(frozen=True)
class ObservablesSection:
    wilson: bool = True
    mode: str = 'auto'


@dataclass(frozen=True)
class FidelitySection:
    enabled: bool = False
    h_grid: tuple[float, ...] = ()

    def grid(self, sweep_grid) -> tuple[float, ...]:
        """The scan grid; the sweep grid when none is configured."""
        return self.h_grid or tuple(sweep_grid)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = 'experiment'
    seed: int = 0
    output_dir: str = ''
    lattice: LatticeSection = field(default_factory=LatticeSection)
    hamiltonian: HamiltonianSection = field(default_factory=HamiltonianSection)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seeds: SeedsSection = field(default_factory=SeedsSection)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    similarity: SimilaritySection = field(default_factory=SimilaritySection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    clustering: ClusteringSection = field(default_factory=ClusteringSection)
    observables: ObservablesSection = field(default_factory=ObservablesSection)
    fidelity: FidelitySection = field(default_factory=FidelitySection)

    @classmethod
    def from_dict(cls, data) -> Self:
        cleaned = clean_config(data, _defaults())
        run = cleaned.pop('run')
        diffusion = dict(cleaned['diffusion'])
        epsilon = diffusion.pop('epsilon')
        if isinstance(epsilon, dict):
            diffusion.update(epsilon=None, epsilon_range=(epsilon['start'], epsilon['stop'], epsilon['num']))
        else:
            diffusion.update(epsilon=tuple(epsilon), epsilon_range=None)
        hamiltonian = dict(cleaned['hamiltonian'], h_grid=tuple(cleaned['hamiltonian']['h_grid']))
        fidelity = dict(cleaned['fidelity'], h_grid=tuple(cleaned['fidelity']['h_grid']))
        try:
            return cls(
                name=run['name'],
                seed=run['seed'],
                output_dir=run['output_dir'],
                lattice=LatticeSection(**cleaned['lattice']),
                hamiltonian=HamiltonianSection(**hamiltonian),
                sampler=SamplerConfig(**cleaned['sampler']),
                optimizer=OptimizerConfig(**cleaned['optimizer']),
                seeds=SeedsSection(**cleaned['seeds']),
                ensemble=EnsembleConfig(**cleaned['ensemble']),
                similarity=SimilaritySection(**cleaned['similarity']),
                diffusion=DiffusionSection(**diffusion),
                clustering=ClusteringSection(**cleaned['clustering']),
                observables=ObservablesSection(**cleaned['observables']),
                fidelity=FidelitySection(**fidelity),
            )
        except ConfigurationError as exc:
            raise ValidationError(str(exc)) from exc

    def to_dict(self) -> dict:
        data = {'schema_version': SCHEMA_VERSION, 'name': self.name, 'seed': self.seed, 'output_dir': self.output_dir}
        for section in _SECTIONS:
            data[section] = _section_dict(section, getattr(self, section))
        return data

    def section(self, name: str) -> dict:
        return _section_dict(name, getattr(self, name))


_SECTIONS = (
    'lattice', 'hamiltonian', 'sampler', 'optimizer', 'seeds', 'ensemble',
    'similarity', 'diffusion', 'clustering', 'observables', 'fidelity',
)

# Fields that are derived from the master seed or set by the pipeline
_EXCLUDED = {'sampler': ('seed',), 'ensemble': ('seeds', 'seed')}


def _section_dict(name: str, section) -> dict:
    data = {f.name: getattr(section, f.name) for f in fields(section) if f.name not in _EXCLUDED.get(name, ())}
    if name in ('hamiltonian', 'fidelity'):
        data['h_grid'] = list(data['h_grid'])
    if name == 'diffusion':
        epsilon, span = data.pop('epsilon'), data.pop('epsilon_range')
        data['epsilon'] = list(epsilon) if epsilon is not None else dict(zip(('start', 'stop', 'num'), span))
    return data


def _defaults() -> dict:
    defaults = ExperimentConfig().to_dict()
    run = {key: defaults.pop(key) for key in ('schema_version', 'name', 'seed', 'output_dir')}
    return {'run': run, **defaults}


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + '\n'


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"Config is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


PRESETS_DIR = Path(__file__).resolve().parent / 'presets'


def presets() -> list[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob('*.json'))


def load_config(path) -> ExperimentConfig:
    """Load a config file; a bare preset name such as ``topological_sn`` loads the bundled preset."""
    path = Path(path)
    if not path.exists() and path.name in presets():
        path = PRESETS_DIR / f"{path.name}.json"
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"Cannot read config {path}: {exc}") from exc
    return loads_config(text)


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(cfg))
    return path


def digest(payload) -> str:
    """sha256 of the canonical JSON form of ``payload``."""
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(',', ':')).encode()).hexdigest()


def config_hash(cfg: ExperimentConfig) -> str:
    """Identifies the computation; the run name and output directory do not take part."""
    data = cfg.to_dict()
    del data['name'], data['output_dir']
    return digest(data)


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, output_dir: str | None = None, h: float | None = None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes['seed'] = seed
    if output_dir is not None:
        changes['output_dir'] = str(output_dir)
    if h is not None:
        changes['hamiltonian'] = replace(cfg.hamiltonian, h=float(h), h_grid=())
    return replace(cfg, **changes)


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    root = Path(getattr(settings, 'EXPERIMENT_ROOT', 'runs'))
    if not cfg.output_dir:
        return root / cfg.name
    path = Path(cfg.output_dir)
    return path if path.is_absolute() else root / path


