"""
CSV tables of a finished run, written to ``<run>/tables``. Floats are
written with 17 significant digits so identical runs give identical bytes.
"""
import csv
import logging
from pathlib import Path

from ensembles.storage import load_ensemble

from . import artifacts
from .models import RunStatus
from .pipeline import StageFailed

logger = logging.getLogger(__name__)

EMBEDDING_COLUMNS = ('member_id', 'psi_1', 'psi_2', 'psi_3', 'cluster', 'w1_bar', 'w2_bar', 'energy')
WILSON_COLUMNS = ('member_id', 'chain_id', 'step', 'w1_bar', 'w2_bar', 'sign_w1', 'sign_w2', 'cluster')
SEED_COLUMNS = ('seed_id', 'base', 'energy_mean', 'energy_stderr', 'converged', 'iterations', 'w1_bar', 'w2_bar')
TRACE_COLUMNS = ('seed_id', 'iteration', 'energy_mean', 'energy_stderr')
FIDELITY_COLUMNS = ('h', 'h_next', 'fidelity', 'energy', 'error')


def cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_table(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(value) for value in row])
    return path


def spectrum_columns(n_eigenvalues: int) -> list[str]:
    return ['epsilon'] + [f"lambda_{i}" for i in range(n_eigenvalues)] + ['degeneracy_count', 'gap']


def spectrum_cells(row: dict, n_eigenvalues: int) -> list:
    values = list(row['eigenvalues'])[:n_eigenvalues]
    values += [None] * (n_eigenvalues - len(values))
    return [row['epsilon'], *values, row['degeneracy_count'], row['gap']]


def spectra_table(root: Path, path: Path) -> Path:
    sweep = artifacts.read_json(root / artifacts.SWEEP_JSON)
    n = sweep['n_eigenvalues']
    return write_table(path, spectrum_columns(n), [spectrum_cells(row, n) for row in sweep['rows']])


def embedding_table(root: Path, path: Path) -> Path:
    clusters = artifacts.read_json(root / artifacts.CLUSTERS_JSON)
    wilson = {m['member_id']: m for m in artifacts.read_json(root / artifacts.WILSON_JSON)['members']}
    ensemble = load_ensemble(root / artifacts.ENSEMBLE_DIR)
    rows = []
    for member_id, (member, coords, label) in enumerate(zip(ensemble.members, clusters['embedding'], clusters['labels'])):
        coords = list(coords)[:3] + [None] * (3 - len(coords))
        loops = wilson.get(member_id, {})
        rows.append([member_id, *coords, label, loops.get('w1_bar'), loops.get('w2_bar'), member.energy.mean])
    return write_table(path, EMBEDDING_COLUMNS, rows)


def wilson_table(root: Path, path: Path) -> Path:
    members = artifacts.read_json(root / artifacts.WILSON_JSON)['members']
    labels = artifacts.read_json(root / artifacts.CLUSTERS_JSON)['labels']
    ensemble = load_ensemble(root / artifacts.ENSEMBLE_DIR)
    rows = []
    for entry in members:
        member = ensemble.members[entry['member_id']]
        rows.append([
            entry['member_id'], member.chain_id, member.step, entry['w1_bar'], entry['w2_bar'],
            *entry['label'], labels[entry['member_id']],
        ])
    return write_table(path, WILSON_COLUMNS, rows)


def seed_tables(root: Path, seeds_path: Path, trace_path: Path) -> list[Path]:
    seeds = artifacts.read_json(root / artifacts.SEEDS_JSON)['seeds']
    rows, trace = [], []
    for entry in seeds:
        rows.append([
            entry['seed_id'], entry['base'], *entry['energy'], entry['converged'], len(entry['trace']),
            entry['w1_bar'], entry['w2_bar'],
        ])
        trace.extend([entry['seed_id'], i + 1, mean, err] for i, (mean, err) in enumerate(entry['trace']))
    return [write_table(seeds_path, SEED_COLUMNS, rows), write_table(trace_path, TRACE_COLUMNS, trace)]


def fidelity_table(root: Path, path: Path) -> Path:
    points = artifacts.read_json(root / artifacts.FIDELITY_JSON)['points']
    return write_table(path, FIDELITY_COLUMNS, [[p[c] for c in FIDELITY_COLUMNS] for p in points])


def field_table(manifest, path: Path) -> Path:
    """Leading eigenvalues at the report epsilon for every completed point of a field sweep."""
    rows, n = [], None
    for point in manifest.points:
        if point['status'] != RunStatus.COMPLETED:
            continue
        sweep = artifacts.read_json(manifest.root / point['output_dir'] / artifacts.SWEEP_JSON)
        n = sweep['n_eigenvalues']
        rows.append([point['h'], *spectrum_cells(sweep['report'], n), sweep['sector_count']])
    header = ['h', *spectrum_columns(n or 0), 'sector_count']
    return write_table(path, header, rows)


def emit_tables(manifest) -> list[Path]:
    """Write the tables of a run or field-sweep manifest; returns the written paths."""
    root = manifest.root
    tables = root / artifacts.TABLES_DIR
    if manifest.kind == 'sweep':
        paths = [field_table(manifest, tables / 'field_spectra.csv')]
        if any(s.name == 'fidelity' and s.status == RunStatus.COMPLETED for s in manifest.stages):
            paths.append(fidelity_table(root, tables / 'fidelity.csv'))
    else:
        pending = [s.name for s in manifest.stages if s.status != RunStatus.COMPLETED]
        if pending:
            raise StageFailed(artifacts.TABLES_DIR, f"stages of {root} not completed: {', '.join(pending)}")
        paths = [
            spectra_table(root, tables / 'spectra.csv'),
            *seed_tables(root, tables / 'seeds.csv', tables / 'energy_trace.csv'),
            embedding_table(root, tables / 'embedding.csv'),
        ]
        if artifacts.read_json(root / artifacts.WILSON_JSON)['members']:
            paths.append(wilson_table(root, tables / 'wilson.csv'))
    logger.info("wrote %d tables to %s", len(paths), tables)
    return paths
