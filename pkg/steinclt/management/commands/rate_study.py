from django.core.management.base import CommandError

from steinclt import experiment
from steinclt.cli import EXIT_USAGE, SteinCommand, parse_model


class Command(SteinCommand):
    help = 'Empirical Kolmogorov distance of W_n to N(0, Sigma) along a geometric n-grid'
    name = 'rate_study'
    defaults = {
        'model': 'equicorr:0.5', 'd': 5, 'innovation': 'rademacher', 'c': None,
        'n_grid': '64,128,256,512,1024,2048,4096', 'reps': 2000, 'c_user': 1.0,
        'family': 'auto', 'grid_points': None,
    }

    def add_command_arguments(self, parser):
        parser.add_argument('--model', default=None, help='identity | equicorr:RHO | two_block:... | csv:PATH')
        parser.add_argument('--d', type=int, default=None)
        parser.add_argument('--innovation', default=None, choices=experiment.INNOVATIONS)
        parser.add_argument('--c', type=float, default=None, help='Truncation level for truncated_normal')
        parser.add_argument('--n-grid', default=None, help='Comma-separated, geometrically spaced')
        parser.add_argument('--reps', type=int, default=None, help='Replicates per n')
        parser.add_argument('--c-user', type=float, default=None, help='Constant of the bound overlays')
        parser.add_argument('--family', default=None, choices=experiment.FAMILIES,
                            help='Test sets: auto picks the grid for d <= 3, random rectangles above')
        parser.add_argument('--grid-points', type=int, default=None, help='Points per axis of a grid family')

    def execute_run(self, config):
        model = parse_model(config['model'], config['d'], config['innovation'], config['c'], config.seed)
        try:
            grid = [int(value) for value in str(config['n_grid']).split(',')]
        except ValueError as exc:
            raise CommandError(f"Bad --n-grid: {exc}", returncode=EXIT_USAGE) from exc
        if config['reps'] < 1:
            raise CommandError('--reps must be positive', returncode=EXIT_USAGE)

        try:
            family = experiment.family_by_name(config['family'], model, config.seed, config['grid_points'])
        except ValueError as exc:
            raise CommandError(str(exc), returncode=EXIT_USAGE) from exc

        study = experiment.rate_study(model, grid, config['reps'], family=family, seed=config.seed,
                                      c_user=config['c_user'])
        return {
            'body': {'model': model.as_dict(), 'study': study.as_dict()},
            'csv': study.csv(),
        }
