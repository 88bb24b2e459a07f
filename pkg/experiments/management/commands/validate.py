from django.core.management.base import BaseCommand

from experiments.config import config_hash, dumps_config, resolve_output_dir

from ._common import config_from_options


class Command(BaseCommand):
    help = "Check an experiment config without running anything"

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True)
        parser.add_argument('--output-dir')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--show', action='store_true', help="Print the canonical form of the config")

    def handle(self, *args, **options):
        cfg = config_from_options(options)
        if options['show']:
            self.stdout.write(dumps_config(cfg), ending='')
        self.stdout.write(f"config hash {config_hash(cfg)}")
        self.stdout.write(self.style.SUCCESS(f"{cfg.name}: valid, output to {resolve_output_dir(cfg)}"))
