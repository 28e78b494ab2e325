from django.conf import settings

from steinclt import suites
from steinclt.cli import EXIT_VERIFICATION, SteinCommand, load_polytope


class Command(SteinCommand):
    help = 'Randomized checks of the Gaussian surface-integral identities and inequalities'
    name = 'verify_lemmas'
    defaults = {'d': 3, 'suite_size': 10, 'points': 5, 'with_stein': False, 'polytope': None}

    def add_command_arguments(self, parser):
        parser.add_argument('--d', type=int, default=None, help='Dimension (3 to 10)')
        parser.add_argument('--suite-size', type=int, default=None, help='Number of random polytopes')
        parser.add_argument('--points', type=int, default=None, help='Out-of-band points per kappa')
        parser.add_argument('--with-stein', action='store_const', const=True, default=None,
                            help='Also check Stein-equation residuals (d <= 4)')
        parser.add_argument('--polytope', default=None,
                            help='Polytope literal file checked in every instance; d is taken from it')

    def execute_run(self, config):
        polytope = load_polytope(config['polytope'])
        d = config['d'] if polytope is None else polytope.dim
        suite = suites.verify_lemmas(
            d, config['suite_size'], config.samples, config.seed,
            points=config['points'], with_stein=bool(config['with_stein']),
            quad_spec=settings.STEINCLT['QUAD_SPEC'], polytope=polytope,
        )
        result = {
            'body': {'summary': suite.summary(), 'quad_spec': settings.STEINCLT['QUAD_SPEC']},
            'checks': suite.records,
            'verdict': suite.verdict(),
        }
        failures = suite.hard_failures
        if failures:
            result['exit_code'] = EXIT_VERIFICATION
            result['message'] = f"{len(failures)} hard check(s) failed: " + ', '.join(
                record.check_id for record in failures[:10])
        return result
