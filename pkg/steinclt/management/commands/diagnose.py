import logging

from django.core.management.base import CommandError

from steinclt import corr
from steinclt.cli import EXIT_CONDITION, EXIT_USAGE, SteinCommand


logger = logging.getLogger(__name__)


class Command(SteinCommand):
    help = 'Degeneracy diagnostics (alpha^2, beta^2, sigma_*^2, angles) of a correlation matrix CSV'
    name = 'diagnose'
    compact = True
    defaults = {'sigma_csv': None}

    def add_command_arguments(self, parser):
        parser.add_argument('sigma_csv', nargs='?', default=None, help='Dense comma-separated matrix')

    def execute_run(self, config):
        path = config['sigma_csv']
        if not path:
            raise CommandError('diagnose needs a matrix CSV path', returncode=EXIT_USAGE)
        try:
            matrix = corr.read_matrix_csv(path)
        except (OSError, ValueError) as exc:
            raise CommandError(f"Cannot read {path}: {exc}", returncode=EXIT_USAGE) from exc

        model = corr.validate_and_normalize(matrix)
        body = corr.diagnostics(model)
        result = {'body': body}
        if model.dim >= 3 and model.beta_sq <= 0:
            logger.warning("beta_sq = 0: some triple of coordinates is degenerate")
            result['exit_code'] = EXIT_CONDITION
            result['message'] = 'beta_sq <= 0: the three-coordinate non-degeneracy condition fails'
        return result
