from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from experiments.config import load_config, with_overrides

CONFIG_INVALID = 2
STAGE_FAILED = 3


def add_config_arguments(parser, stages):
    parser.add_argument('--config', required=True, help="Path to the experiment config (JSON)")
    parser.add_argument('--output-dir', help="Run directory; overrides the config's output_dir")
    parser.add_argument('--seed', type=int, help="Master seed; overrides the config's seed")
    parser.add_argument(
        '--force-stage', action='append', default=[], choices=stages, dest='force',
        help="Recompute this stage and every later one even if cached (repeatable)",
    )
    parser.add_argument('--no-record', action='store_false', dest='record', help="Do not mirror the run into the database")


def config_from_options(options):
    try:
        cfg = load_config(options['config'])
    except ValidationError as exc:
        raise invalid(exc) from exc
    return with_overrides(cfg, seed=options.get('seed'), output_dir=options.get('output_dir'))


def invalid(exc: ValidationError) -> CommandError:
    return CommandError("invalid config:\n  " + "\n  ".join(exc.messages), returncode=CONFIG_INVALID)


def report_manifest(command, manifest):
    for warning in manifest.warnings:
        command.stdout.write(command.style.WARNING(f"warning: {warning}"))
    failures = manifest.failures()
    if failures:
        lines = [f"{s.name}: {s.error}" for s in failures]
        raise CommandError(
            f"{len(failures)} stage(s) failed in {manifest.output_dir}:\n  " + "\n  ".join(lines),
            returncode=STAGE_FAILED,
        )
    command.stdout.write(command.style.SUCCESS(f"{manifest.name}: {manifest.status} -> {manifest.output_dir}"))
