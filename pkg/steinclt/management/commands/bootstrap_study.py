from django.core.management.base import CommandError

from steinclt import experiment
from steinclt.cli import EXIT_USAGE, SteinCommand, parse_model
from steinclt.utils import derive_seed


class Command(SteinCommand):
    help = 'Gaussian multiplier bootstrap: Delta_n* and rho_hat^xi over simulated or observed datasets'
    name = 'bootstrap_study'
    defaults = {
        'model': 'equicorr:0.5', 'd': 10, 'innovation': 'rademacher', 'c': None,
        'n': 1024, 'datasets': 200, 'n_boot': 2000, 'gamma': 0.1, 'c_user': 1.0, 'envelope_c': 1.0,
        'dataset_csv': None, 'dataset': None, 'truncate': False,
    }

    def add_command_arguments(self, parser):
        parser.add_argument('--model', default=None)
        parser.add_argument('--d', type=int, default=None)
        parser.add_argument('--innovation', default=None, choices=experiment.INNOVATIONS)
        parser.add_argument('--c', type=float, default=None)
        parser.add_argument('--n', type=int, default=None)
        parser.add_argument('--datasets', type=int, default=None)
        parser.add_argument('--n-boot', type=int, default=None)
        parser.add_argument('--gamma', type=float, default=None)
        parser.add_argument('--c-user', type=float, default=None)
        parser.add_argument('--envelope-c', type=float, default=None,
                            help='Constant of the B^2 sqrt(log(d/gamma)/n) envelope')
        parser.add_argument('--dataset-csv', default=None, help='Also export the first simulated dataset')
        parser.add_argument('--dataset', default=None,
                            help='Bootstrap this CSV dataset (header line, one row per observation) '
                                 'instead of simulating; d is taken from its columns')
        parser.add_argument('--truncate', action='store_true', default=None,
                            help='Truncate entries at kappa_n before the bootstrap and report W^')

    def execute_run(self, config):
        if config['n_boot'] < 1 or config['datasets'] < 1:
            raise CommandError('--n-boot and --datasets must be positive', returncode=EXIT_USAGE)
        if not 0.0 < config['gamma'] < 1.0:
            raise CommandError('--gamma must lie in (0, 1)', returncode=EXIT_USAGE)

        data = None
        d = config['d']
        if config['dataset']:
            try:
                data = experiment.read_dataset_csv(config['dataset'])
            except (OSError, ValueError) as exc:
                raise CommandError(f"Cannot read dataset {config['dataset']}: {exc}",
                                   returncode=EXIT_USAGE) from exc
            d = data.shape[1]
        model = parse_model(config['model'], d, config['innovation'], config['c'], config.seed)

        study = experiment.bootstrap_study(
            model, config['n'], config['datasets'], config['n_boot'], config['gamma'], config.seed,
            c_user=config['c_user'], envelope_c=config['envelope_c'], data=data, truncate=bool(config['truncate']),
        )
        if config['dataset_csv']:
            first = data if data is not None else experiment.simulate_X(model, config['n'],
                                                                        derive_seed(config.seed, 'data', 0))
            experiment.write_dataset_csv(config['dataset_csv'], first)
        return {'body': {'model': model.as_dict(), **study}}
