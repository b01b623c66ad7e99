import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from .config import load_config
from .exception_handler import experiment_exception_handler
from .reports import ReportWriter
from .services import run

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}
APP_LOGGERS = ('geometry', 'flow', 'transport', 'fiber_calculus', 'inversion', 'experiments')


class ExperimentCommand(BaseCommand):
    """
    Shared flags and error mapping of the experiment commands.

    Subclasses set ``name``; the runner of that name computes the results
    and the artifacts are written only when it succeeds.
    """

    name = None

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment document (JSON or YAML)')
        parser.add_argument('--out', default=None, help='Output directory (default: THERMOSTAT_OUTPUT_DIR/<command>)')
        parser.add_argument('--seed', type=int, default=None, help='Overrides the seed of the document')
        parser.add_argument('--threads', type=int, default=None, help='Worker threads for ray batches')
        parser.add_argument('--no-cache', action='store_true', help='Do not read or write cached forward matrices')

    def handle(self, *args, **options):
        level = VERBOSITY_LEVELS.get(options.get('verbosity', 1), logging.INFO)
        for name in APP_LOGGERS:
            logging.getLogger(name).setLevel(level)
        out_dir = options['out'] or str(Path(settings.THERMOSTAT_OUTPUT_DIR) / self.name)
        threads = options['threads'] or settings.THERMOSTAT_THREADS
        try:
            config = load_config(options['config'], self.name, options['seed'])
            output = run(self.name, config, threads=threads, use_cache=not options['no_cache'])
            writer = ReportWriter(out_dir, config)
            writer.json(output.report, output.results)
            for name, header, rows in output.tables:
                writer.csv(name, header, rows)
        except Exception as exc:
            payload, status = experiment_exception_handler(exc)
            self.stderr.write(json.dumps(payload, default=str))
            raise CommandError(payload['detail'], returncode=status)

        for path in writer.written:
            self.stdout.write(f"Wrote {path}")
        self.stdout.write(self.style.SUCCESS(f"{self.name} finished (config {config.config_hash[:12]})"))
