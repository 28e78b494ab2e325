from steinclt import suites
from steinclt.cli import EXIT_VERIFICATION, SteinCommand, load_polytope


class Command(SteinCommand):
    help = 'Gaussian-to-Gaussian comparison: Delta terms, empirical rho and the comparison bound'
    name = 'compare_gaussians'
    defaults = {'d': 3, 'pairs': 20, 'c_user': suites.GAUSS_C_USER, 'polytope': None}

    def add_command_arguments(self, parser):
        parser.add_argument('--d', type=int, default=None)
        parser.add_argument('--pairs', type=int, default=None, help='Points of the Delta_inf sweep')
        parser.add_argument('--c-user', type=float, default=None, help='Bound constant (default 10)')
        parser.add_argument('--polytope', default=None,
                            help='Measure rho_hat on this polytope literal file instead of rectangles')

    def execute_run(self, config):
        polytope = load_polytope(config['polytope'])
        d = config['d'] if polytope is None else polytope.dim
        suite, sweep = suites.compare_gaussians(d, config['pairs'], config.samples, config.seed,
                                                c_user=config['c_user'], polytope=polytope)
        result = {
            'body': {'summary': suite.summary(), 'sweep': sweep},
            'checks': suite.records,
            'verdict': suite.verdict(),
        }
        if suite.hard_failures:
            result['exit_code'] = EXIT_VERIFICATION
            result['message'] = 'Delta-term identities failed'
        return result
