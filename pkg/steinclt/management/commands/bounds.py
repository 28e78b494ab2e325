from django.core.management.base import CommandError

from steinclt import bounds
from steinclt.cli import EXIT_USAGE, SteinCommand
from steinclt.utils import csv_text


class Command(SteinCommand):
    help = 'Evaluate a closed-form bound: bounds eval --preset fklz --n 10000 --d 10 ...'
    name = 'bounds'
    compact = True
    defaults = {
        'action': None, 'preset': 'fklz', 'n': None, 'n_grid': None, 'd': None, 'B': 1.0,
        'alpha2': 1.0, 'beta2': 1.0, 'covgap': 0.0, 'gamma': 0.1, 'c': 1.0,
        'delta': None, 'delta_inf': None, 'sigma_star2': None,
    }

    def add_command_arguments(self, parser):
        parser.add_argument('action', nargs='?', default=None, choices=['eval'])
        parser.add_argument('--preset', default=None, choices=bounds.PRESETS)
        parser.add_argument('--n', type=int, default=None)
        parser.add_argument('--n-grid', default=None, help='Comma-separated sample sizes (batch CSV mode)')
        parser.add_argument('--d', type=int, default=None)
        parser.add_argument('--B', type=float, default=None)
        parser.add_argument('--alpha2', type=float, default=None)
        parser.add_argument('--beta2', type=float, default=None)
        parser.add_argument('--covgap', type=float, default=None)
        parser.add_argument('--gamma', type=float, default=None)
        parser.add_argument('--c', type=float, default=None, help='Absolute constant (default 1)')
        parser.add_argument('--delta', type=float, default=None, help="Boundedness level for 'bounded'")
        parser.add_argument('--delta-inf', type=float, default=None, help="||Sigma1 - Sigma||_inf for 'gauss'")
        parser.add_argument('--sigma-star2', type=float, default=None, help="Smallest eigenvalue for 'koike'")

    def _inputs(self, config, n):
        return bounds.BoundInputs(
            n=n, d=config['d'], B=config['B'], alpha_sq=config['alpha2'], beta_sq=config['beta2'],
            cov_gap=config['covgap'], gamma=config['gamma'], c_user=config['c'],
        )

    def _record(self, config, n):
        return bounds.evaluate_preset(config['preset'], self._inputs(config, n), delta=config['delta'],
                                      delta_inf=config['delta_inf'], sigma_star_sq=config['sigma_star2'])

    def execute_run(self, config):
        if config['action'] != 'eval':
            raise CommandError("usage: bounds eval --preset NAME --n N --d D [...]", returncode=EXIT_USAGE)
        if config['d'] is None:
            raise CommandError('--d is required', returncode=EXIT_USAGE)

        if config['n_grid']:
            try:
                grid = [int(value) for value in str(config['n_grid']).split(',')]
            except ValueError as exc:
                raise CommandError(f"Bad --n-grid: {exc}", returncode=EXIT_USAGE) from exc
            rows = [self._record(config, n) for n in grid]
            for n, row in zip(grid, rows):
                row['n'] = n
            columns = ['n', 'bound'] + sorted(key for key in rows[0] if key not in ('n', 'bound', 'preset'))
            table = csv_text(columns, [[row[key] for key in columns] for row in rows])
            return {'body': {'rows': rows}, 'csv': table}

        if config['n'] is None:
            raise CommandError('--n or --n-grid is required', returncode=EXIT_USAGE)
        return {'body': {'result': self._record(config, config['n'])}}
