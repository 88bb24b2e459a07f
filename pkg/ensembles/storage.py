"""
On-disk layout of an ensemble directory:

    metadata.json   lattice, Hamiltonian, ensemble config, seed provenance
    members.bin     member parameter blobs back to back (RbmParams.to_bytes)
    manifest.csv    member_id, chain_id, step, energy_mean, energy_stderr, energy_samples
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from django.db import transaction

from wavefunctions.hamiltonian import ToricParams
from wavefunctions.rbm import RbmParams
from wavefunctions.vmc import McEstimate

from .generation import Ensemble, EnsembleConfig, Member
from .models import EnsembleRecord, MemberRecord

METADATA = 'metadata.json'
MEMBERS = 'members.bin'
MANIFEST = 'manifest.csv'

MANIFEST_COLUMNS = ('member_id', 'chain_id', 'step', 'energy_mean', 'energy_stderr', 'energy_samples')


def params_digest(params: RbmParams) -> str:
    return hashlib.sha256(params.to_bytes()).hexdigest()


def save_ensemble(ensemble: Ensemble, directory: Path, provenance: list[str] | None = None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    config = asdict(ensemble.config)
    config.pop('seeds')
    metadata = {
        'lattice': {'lx': ensemble.lx, 'ly': ensemble.ly},
        'hamiltonian': asdict(ensemble.tp),
        'ensemble': config,
        'seeds': [
            {'digest': params_digest(seed), 'source': (provenance or [''] * len(ensemble.config.seeds))[i]}
            for i, seed in enumerate(ensemble.config.seeds)
        ],
        'n_members': len(ensemble),
        'n_estimates': ensemble.n_estimates,
        'n_cache_hits': ensemble.n_cache_hits,
    }
    paths = [directory / METADATA, directory / MEMBERS, directory / MANIFEST]
    paths[0].write_text(json.dumps(metadata, indent=2, sort_keys=True) + '\n')
    paths[1].write_bytes(b''.join(m.params.to_bytes() for m in ensemble.members))
    with paths[2].open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(MANIFEST_COLUMNS)
        for member_id, member in enumerate(ensemble.members):
            writer.writerow([
                member_id, member.chain_id, member.step,
                f"{member.energy.mean:.17g}", f"{member.energy.std_error:.17g}", member.energy.n_samples,
            ])
    return paths


def split_params(blob: bytes, lx: int, ly: int) -> list[RbmParams]:
    """Cut a concatenation of RbmParams.to_bytes payloads back into parameter sets."""
    size = len(RbmParams(lx, ly, [0.0] * (10 * lx * ly)).to_bytes())
    return [RbmParams.from_bytes(blob[i: i + size]) for i in range(0, len(blob), size)]


def load_ensemble(directory: Path) -> Ensemble:
    """Rebuild an ensemble; seed parameters are not stored and come back empty."""
    directory = Path(directory)
    metadata = json.loads((directory / METADATA).read_text())
    lx, ly = metadata['lattice']['lx'], metadata['lattice']['ly']
    params = split_params((directory / MEMBERS).read_bytes(), lx, ly)

    ensemble = Ensemble(lx, ly, ToricParams(**metadata['hamiltonian']), EnsembleConfig(**metadata['ensemble']))
    ensemble.n_estimates = metadata['n_estimates']
    ensemble.n_cache_hits = metadata['n_cache_hits']
    with (directory / MANIFEST).open(newline='') as handle:
        for row, member_params in zip(csv.DictReader(handle), params):
            energy = McEstimate(float(row['energy_mean']), float(row['energy_stderr']), int(row['energy_samples']))
            ensemble.members.append(Member(member_params, energy, int(row['chain_id']), int(row['step'])))
    return ensemble


def record_ensemble(ensemble: Ensemble, directory: Path, observables=None, clusters=None):
    """
    Mirror an ensemble directory into the database, replacing any earlier
    record for the same directory. ``observables`` optionally maps member id
    to ``(w1_bar, w2_bar)``, ``clusters`` member id to cluster label.
    """
    config = asdict(ensemble.config)
    config.pop('seeds')
    observables = observables or {}
    clusters = clusters or {}
    with transaction.atomic():
        EnsembleRecord.objects.filter(directory=str(directory)).delete()
        record = EnsembleRecord.objects.create(
            directory=str(directory),
            lx=ensemble.lx,
            ly=ensemble.ly,
            temperature=ensemble.config.temperature,
            field=ensemble.tp.h,
            config=config,
        )
        for member_id, member in enumerate(ensemble.members):
            w1, w2 = observables.get(member_id, (None, None))
            MemberRecord.objects.create(
                ensemble=record,
                member_id=member_id,
                chain_id=member.chain_id,
                step=member.step,
                energy_mean=member.energy.mean,
                energy_stderr=member.energy.std_error,
                w1_bar=w1,
                w2_bar=w2,
                cluster=clusters.get(member_id),
            )
    record.refresh_from_db()
    return record
