"""
Shared command plumbing: RunConfig resolution (flags > --config file >
settings.STEINCLT), report assembly, output and optional persistence.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from . import __version__
from .exceptions import SteinCLTError
from .models import CheckResult, ExperimentRun
from .utils import dumps_report, truncate_for_log, write_text


logger = logging.getLogger(__name__)

FORMATS = ('json', 'csv')

# Exit-code contract
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_CONDITION = 3


@dataclass
class RunConfig:
    """Fully resolved parameters of one command run."""
    command: str
    seed: int
    samples: int
    out: str = None
    format: str = 'json'
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def as_dict(self):
        return asdict(self)


def load_config_file(path):
    """JSON object of option values; keys use the option names with underscores."""
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, ValueError) as exc:
        raise CommandError(f"Cannot read config file {path}: {exc}", returncode=EXIT_USAGE) from exc
    if not isinstance(data, dict):
        raise CommandError(f"Config file {path} must hold a JSON object", returncode=EXIT_USAGE)
    return data


def resolve_config(command, options, defaults):
    """
    Merge option sources into a RunConfig.

    Args:
        command: command name echoed in the report
        options: parsed command-line options; None means "not given"
        defaults: command-specific parameter defaults

    Returns:
        RunConfig
    """
    base = settings.STEINCLT
    from_file = load_config_file(options.get('config'))

    def pick(key, fallback):
        if options.get(key) is not None:
            return options[key]
        if key in from_file:
            return from_file[key]
        return fallback

    params = {key: pick(key, value) for key, value in defaults.items()}
    fmt = pick('format', base.get('FORMAT', 'json'))
    if fmt not in FORMATS:
        raise CommandError(f"--format must be one of {', '.join(FORMATS)}", returncode=EXIT_USAGE)
    try:
        seed = int(pick('seed', base['SEED']))
        samples = int(pick('samples', base['SAMPLES']))
    except (TypeError, ValueError) as exc:
        raise CommandError(f"Invalid seed or samples: {exc}", returncode=EXIT_USAGE) from exc
    return RunConfig(command=command, seed=seed, samples=samples, out=pick('out', None), format=fmt,
                     params=params)


class SteinCommand(BaseCommand):
    """
    Base class of the steinclt commands.

    Subclasses set ``name`` and ``defaults``, add their own arguments in
    ``add_command_arguments`` (with default None so the config file can
    fill them) and implement ``execute_run(config)`` returning a dict with a
    'body' and optionally 'checks', 'verdict', 'csv' and 'exit_code'.
    """
    name = None
    defaults = {}
    compact = False

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=None, help='Master seed (default settings / STEINCLT_SEED)')
        parser.add_argument('--samples', type=int, default=None, help='Monte Carlo samples per evaluation')
        parser.add_argument('--out', default=None, help='Write the report to this path')
        parser.add_argument('--format', default=None, choices=FORMATS, help='Report format')
        parser.add_argument('--config', default=None, help='JSON file of option values')
        parser.add_argument('--store', action='store_true', help='Persist the run (requires migrate)')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        if options.get('verbosity', 1) >= 2:
            logging.getLogger('steinclt').setLevel(logging.DEBUG)
        config = resolve_config(self.name, options, self.defaults)
        logger.debug("Resolved config: %s", truncate_for_log(config.as_dict()))

        try:
            result = self.execute_run(config)
        except CommandError:
            raise
        except (SteinCLTError, ValueError, OSError) as exc:
            logger.error("%s failed: %s", self.name, exc)
            raise CommandError(str(exc), returncode=EXIT_USAGE) from exc

        checks = result.get('checks', [])
        report = self.build_report(config, result['body'], checks)
        self.emit(config, report, result.get('csv'))
        if options.get('store'):
            self.store(config, report, checks, result.get('verdict', 'pass'))

        exit_code = result.get('exit_code', 0)
        if exit_code:
            raise CommandError(result.get('message', f"{self.name} finished with exit code {exit_code}"),
                               returncode=exit_code)

    def execute_run(self, config):
        raise NotImplementedError

    def build_report(self, config, body, checks):
        report = {
            'schema_version': settings.STEINCLT['SCHEMA_VERSION'],
            'artifact_version': __version__,
            'command': self.name,
            'config': config.as_dict(),
        }
        report.update(body)
        if checks:
            report['checks'] = [check.as_dict() for check in checks]
        return report

    def emit(self, config, report, csv_body=None):
        if config.format == 'csv' and csv_body is not None:
            text = csv_body
        else:
            text = dumps_report(report, compact=self.compact)
        if config.out:
            write_text(config.out, text)
            if csv_body is not None and config.format == 'json':
                write_text(Path(config.out).with_suffix('.csv'), csv_body)
        else:
            self.stdout.write(text, ending='')

    def store(self, config, report, checks, verdict):
        summary = {key: value for key, value in report.items() if key not in ('checks', 'config')}
        with transaction.atomic():
            run = ExperimentRun.objects.create(
                command=self.name,
                seed=config.seed,
                schema_version=report['schema_version'],
                artifact_version=report['artifact_version'],
                config=json.loads(dumps_report(config.as_dict())),
                summary=json.loads(dumps_report(summary)),
                verdict=verdict,
            )
            CheckResult.objects.bulk_create([
                CheckResult(
                    run=run,
                    check_number=number,
                    check_id=check.check_id,
                    lhs=_finite(check.lhs),
                    lhs_stderr=_finite(check.lhs_stderr),
                    rhs=_finite(check.rhs),
                    ratio=_finite(check.ratio),
                    n_samples=check.n_samples,
                    seed=check.seed,
                    verdict=check.verdict,
                )
                for number, check in enumerate(checks, start=1)
            ])
        logger.info("Stored run %s with %d check(s)", run.pk, len(checks))
        return run


def _finite(value):
    return value if value is not None and math.isfinite(value) else None


MODEL_USAGE = (
    "model spec: identity | equicorr:RHO | two_block:D1:RHO_IN:RHO_CROSS | "
    "low_rank:RANK:EPS | random | csv:PATH"
)


def parse_model(spec, d, innovation, c=None, seed=0):
    """
    Build an experiment.DataModel from a model spec string.

    Raises:
        CommandError (exit code 2) with the usage text when the spec is malformed
    """
    from . import corr, experiment
    from .utils import substream

    try:
        kind, *args = str(spec).split(':')
        if kind == 'identity':
            matrix = corr.equicorrelated(int(d), 0.0)
        elif kind == 'equicorr':
            matrix = corr.equicorrelated(int(d), float(args[0]))
        elif kind == 'two_block':
            d1 = int(args[0])
            matrix = corr.two_block(d1, int(d) - d1, float(args[1]), float(args[2]))
        elif kind == 'low_rank':
            matrix = corr.low_rank_ridge(int(d), int(args[0]), float(args[1]), substream(seed, 'model'))
        elif kind == 'random':
            matrix = corr.random_correlation(int(d), substream(seed, 'model'))
        elif kind == 'csv':
            matrix = corr.read_matrix_csv(':'.join(args))
        else:
            raise ValueError(f"unknown model kind {kind!r}")
        return experiment.DataModel.from_matrix(matrix, innovation, c)
    except (IndexError, ValueError, OSError, SteinCLTError) as exc:
        raise CommandError(f"Malformed model spec {spec!r}: {exc}\n{MODEL_USAGE}", returncode=EXIT_USAGE) from exc


def load_polytope(path):
    """Polytope from a literal file (see polytope.parse_polytope); None when no path is given."""
    if not path:
        return None
    from .polytope import parse_polytope

    try:
        return parse_polytope(Path(path).read_text(encoding='utf-8'))
    except (OSError, SteinCLTError) as exc:
        raise CommandError(f"Cannot read polytope {path}: {exc}", returncode=EXIT_USAGE) from exc
