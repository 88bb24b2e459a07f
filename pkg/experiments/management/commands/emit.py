from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments import artifacts
from experiments.config import resolve_output_dir
from experiments.emitters import emit_tables
from experiments.pipeline import RunManifest, StageFailed

from ._common import STAGE_FAILED, config_from_options


class Command(BaseCommand):
    help = "Re-emit the CSV tables of a finished run or sweep"

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--output-dir', help="Run directory holding manifest.json")
        source.add_argument('--config', help="Config whose run directory to use")
        parser.add_argument('--seed', type=int, help="Master seed override used to locate the run")

    def handle(self, *args, **options):
        if options['config']:
            root = resolve_output_dir(config_from_options(options)).resolve()
        else:
            root = Path(options['output_dir']).resolve()
        try:
            manifest = RunManifest.load(root)
            paths = emit_tables(manifest)
            manifest.tables = artifacts.describe(paths, manifest.root)
            manifest.save()
        except (StageFailed, OSError) as exc:
            raise CommandError(str(exc), returncode=STAGE_FAILED) from exc
        for path in paths:
            self.stdout.write(str(path))
        self.stdout.write(self.style.SUCCESS(f"{len(paths)} table(s) written"))
