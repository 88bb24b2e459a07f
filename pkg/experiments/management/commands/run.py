from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from experiments.pipeline import STAGES, run_pipeline

from ._common import add_config_arguments, config_from_options, invalid, report_manifest


class Command(BaseCommand):
    help = "Run seeds, ensemble, similarity, diffusion map, clustering and observables for one config"

    def add_arguments(self, parser):
        add_config_arguments(parser, STAGES)

    def handle(self, *args, **options):
        cfg = config_from_options(options)
        try:
            manifest = run_pipeline(cfg, force=options['force'], reporter=self.stdout.write, record=options['record'])
        except ValidationError as exc:
            raise invalid(exc) from exc
        summary = manifest.summary
        if 'sector_count' in summary:
            self.stdout.write(f"sector count: {summary['sector_count']} (epsilon range {summary.get('sector_range')})")
        if summary.get('label_agreement') is not None:
            self.stdout.write(f"cluster / Wilson label agreement: {summary['label_agreement']:.3f}")
        report_manifest(self, manifest)
