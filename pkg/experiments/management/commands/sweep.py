from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand

from experiments.pipeline import STAGES, run_field_sweep

from ._common import add_config_arguments, config_from_options, invalid, report_manifest


class Command(BaseCommand):
    help = "Run the pipeline at every field value of hamiltonian.h_grid, plus the optional fidelity scan"

    def add_arguments(self, parser):
        add_config_arguments(parser, STAGES + ('fidelity',))

    def handle(self, *args, **options):
        cfg = config_from_options(options)
        try:
            manifest = run_field_sweep(cfg, force=options['force'], reporter=self.stdout.write, record=options['record'])
        except ValidationError as exc:
            raise invalid(exc) from exc
        for h, count in manifest.summary['sector_counts'].items():
            self.stdout.write(f"h={h}: sector count {count if count is not None else '-'}")
        lowest = manifest.summary.get('fidelity_minimum')
        if lowest:
            self.stdout.write(f"fidelity minimum {lowest['fidelity']:.4f} between h={lowest['h']:g} and h={lowest['h_next']:g}")
        report_manifest(self, manifest)
