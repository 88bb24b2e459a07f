from django.db import transaction

from ensembles.storage import load_ensemble, record_ensemble

from . import artifacts
from .models import Artifact, ExperimentRun, RunStatus, StageRecord


def record_run(manifest) -> ExperimentRun:
    """
    Mirror a run manifest into the database, replacing any earlier record for
    the same output directory. A completed run also records its ensemble with
    per-member Wilson loops and cluster labels.
    """
    with transaction.atomic():
        ExperimentRun.objects.filter(output_dir=manifest.output_dir).delete()
        run = ExperimentRun.objects.create(
            name=manifest.name,
            kind=manifest.kind,
            config_hash=manifest.config_hash,
            output_dir=manifest.output_dir,
            status=RunStatus.RUNNING,
            sector_count=manifest.summary.get('sector_count'),
            warnings=manifest.warnings,
        )
        for position, outcome in enumerate(manifest.stages):
            StageRecord.objects.create(
                run=run,
                stage=outcome.name,
                position=position,
                status=outcome.status,
                cached=outcome.cached,
                key=outcome.key,
                wall_seconds=outcome.wall_seconds,
                error=outcome.error,
            )
            for entry in outcome.artifacts:
                Artifact.objects.create(run=run, stage=outcome.name, **entry)
        for entry in manifest.tables:
            Artifact.objects.create(run=run, stage=artifacts.TABLES_DIR, **entry)

        if manifest.status == RunStatus.COMPLETED:
            ExperimentRun.objects.filter(pk=run.pk).update(status=RunStatus.COMPLETED)
            if manifest.kind == 'run':
                _record_members(manifest)
    run.refresh_from_db()
    return run


def _record_members(manifest):
    root = manifest.root
    ensemble = load_ensemble(root / artifacts.ENSEMBLE_DIR)
    wilson = artifacts.read_json(root / artifacts.WILSON_JSON)
    clusters = artifacts.read_json(root / artifacts.CLUSTERS_JSON)
    observables = {m['member_id']: (m['w1_bar'], m['w2_bar']) for m in wilson['members']}
    labels = dict(enumerate(clusters['labels']))
    record_ensemble(ensemble, root / artifacts.ENSEMBLE_DIR, observables, labels)
