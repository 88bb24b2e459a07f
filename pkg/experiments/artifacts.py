"""
File layout of a run directory:

    config.json                  canonical config of the run
    manifest.json                RunManifest
    seeds/seeds.bin, seeds.json  optimized (or analytic) seed states with energies and Wilson loops
    ensemble/                    ensemble directory (see ensembles.storage)
    similarity/similarity.*      SimilarityMatrix (see spectra.similarity.save_similarity)
    diffusion/sweep.json         per-epsilon spectra and the detected sector count
    clustering/clusters.json     k-means labels and embedding coordinates
    observables/wilson.json      per-member averaged Wilson loops
    tables/*.csv                 emitted tables

Every stage directory also holds a ``stage.json`` with the stage's cache key,
artifact digests, warnings and summary values.
"""
import hashlib
import json
from pathlib import Path

CONFIG = 'config.json'
MANIFEST = 'manifest.json'
STAGE_FILE = 'stage.json'

SEEDS_BIN = 'seeds/seeds.bin'
SEEDS_JSON = 'seeds/seeds.json'
ENSEMBLE_DIR = 'ensemble'
SIMILARITY_BASE = 'similarity/similarity'
SWEEP_JSON = 'diffusion/sweep.json'
CLUSTERS_JSON = 'clustering/clusters.json'
WILSON_JSON = 'observables/wilson.json'
FIDELITY_JSON = 'fidelity/fidelity.json'
TABLES_DIR = 'tables'


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n')
    return path


def read_json(path: Path):
    return json.loads(Path(path).read_text())


def file_digest(path: Path) -> str:
    sha = hashlib.sha256()
    with Path(path).open('rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            sha.update(block)
    return sha.hexdigest()


def describe(paths, root: Path) -> list[dict]:
    """Relative path, sha256 and size of each file, sorted by path."""
    root = Path(root)
    entries = []
    for path in sorted(Path(p) for p in paths):
        entries.append({
            'path': path.relative_to(root).as_posix(),
            'sha256': file_digest(path),
            'size': path.stat().st_size,
        })
    return entries


def intact(entries, root: Path) -> bool:
    """True if every listed artifact still exists with its recorded digest."""
    root = Path(root)
    for entry in entries:
        path = root / entry['path']
        if not path.is_file() or file_digest(path) != entry['sha256']:
            return False
    return True
