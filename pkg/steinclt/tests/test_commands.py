import json
import math
import os
import tempfile
from io import StringIO
from unittest.mock import patch

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from steinclt import corr, experiment, suites
from steinclt.gaussint import McEstimate
from steinclt.models import CheckResult, ExperimentRun


RANK_TWO = [[1.0, 0.0, 1 / math.sqrt(2)],
            [0.0, 1.0, 1 / math.sqrt(2)],
            [1 / math.sqrt(2), 1 / math.sqrt(2), 1.0]]

# x_i <= 0.5 and x_1 + x_2 + x_3 >= -1
BOX = "3\n1 0 0 0.5\n0 1 0 0.5\n0 0 1 0.5\n-1 -1 -1 1\n"


def run(*args, **options):
    """call_command returning stdout."""
    out = StringIO()
    call_command(*args, stdout=out, stderr=StringIO(), **options)
    return out.getvalue()


def failing_suite(*args, **kwargs):
    """A suite with one failed hard identity and one infinite-budget check."""
    suite = suites.Suite(1, 100)
    suite.identity('divergence-1/#0', McEstimate(1.0, 0.0, 100, 1), McEstimate(2.0, 0.0, 100, 1), 1)
    suite.budget_check('aht-3/#0', McEstimate(0.1, 0.0, 100, 1), math.inf, 1)
    return suite


class CommandTestMixin:
    """Temporary directory for matrices and reports."""

    def setUp(self):
        """Set up a scratch directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def write_matrix(self, name, matrix):
        path = self.path(name)
        np.savetxt(path, np.asarray(matrix), delimiter=',')
        return path


class DiagnoseCommandTestCase(CommandTestMixin, SimpleTestCase):
    """diagnose: diagnostics and the exit-code contract."""

    def test_identity(self):
        report = json.loads(run('diagnose', self.write_matrix('eye.csv', np.eye(3))))
        self.assertEqual(report['alpha_sq'], 1.0)
        self.assertAlmostEqual(report['beta_sq'], 1.0)
        self.assertEqual(report['command'], 'diagnose')
        self.assertEqual(report['schema_version'], settings.STEINCLT['SCHEMA_VERSION'])

    def test_compact_output(self):
        output = run('diagnose', self.write_matrix('eye.csv', np.eye(3)))
        self.assertEqual(output.count('\n'), 1)

    def test_equicorrelated(self):
        report = json.loads(run('diagnose', self.write_matrix('equi.csv', corr.equicorrelated(3, 0.5))))
        self.assertAlmostEqual(report['beta_sq'], 0.6667, places=4)

    def test_rank_deficient_exits_3(self):
        """The report is still printed before the condition exit code."""
        out = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command('diagnose', self.write_matrix('rank2.csv', RANK_TWO), stdout=out, stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertAlmostEqual(json.loads(out.getvalue())['beta_sq'], 0.0, places=8)

    def test_missing_file_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('diagnose', self.path('missing.csv'))
        self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            run('diagnose')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_matrix_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('diagnose', self.write_matrix('bad.csv', [[1.0, 2.0], [2.0, 1.0]]))
        self.assertEqual(ctx.exception.returncode, 2)


class BoundsCommandTestCase(CommandTestMixin, SimpleTestCase):
    """bounds eval: presets, batch CSV and configuration precedence."""

    def test_preset(self):
        report = json.loads(run('bounds', 'eval', preset='koike', n=10000, d=10, sigma_star2=1.0))
        self.assertAlmostEqual(report['result']['bound'], 0.3218, places=4)
        self.assertFalse(report['result']['vacuous'])

    def test_vacuous_is_reported(self):
        report = json.loads(run('bounds', 'eval', preset='fklz', n=10000, d=10))
        self.assertTrue(report['result']['vacuous'])

    def test_batch_csv(self):
        output = run('bounds', 'eval', preset='cckk', n_grid='100,1000,10000', d=10, format='csv')
        lines = output.strip().split('\r\n')
        self.assertEqual(lines[0], 'n,bound,vacuous')
        self.assertEqual(len(lines), 4)

    def test_usage_errors(self):
        for kwargs in ({'preset': 'fklz', 'n': 100}, {'preset': 'fklz', 'd': 10},
                       {'preset': 'gauss', 'n': 100, 'd': 10}, {'preset': 'fklz', 'n': 2, 'd': 10}):
            with self.subTest(**kwargs):
                with self.assertRaises(CommandError) as ctx:
                    run('bounds', 'eval', **kwargs)
                self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            run('bounds', preset='fklz', n=100, d=10)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_config_file_and_flags(self):
        """Flags override the config file, which overrides settings."""
        path = self.path('config.json')
        with open(path, 'w') as handle:
            json.dump({'action': 'eval', 'preset': 'cckk', 'n': 10000, 'd': 4, 'seed': 5}, handle)
        report = json.loads(run('bounds', config=path, d=10))
        self.assertAlmostEqual(report['result']['bound'], 2.1240, delta=5e-3)
        self.assertEqual(report['config']['seed'], 5)

    def test_bad_config_file(self):
        path = self.path('config.json')
        with open(path, 'w') as handle:
            handle.write('[1, 2]')
        with self.assertRaises(CommandError) as ctx:
            run('bounds', 'eval', config=path)
        self.assertEqual(ctx.exception.returncode, 2)

    @override_settings(STEINCLT=dict(settings.STEINCLT, SEED=7))
    def test_seed_default_from_settings(self):
        report = json.loads(run('bounds', 'eval', preset='cckk', n=100, d=10))
        self.assertEqual(report['config']['seed'], 7)

    def test_out_file(self):
        path = self.path('reports/bound.json')
        self.assertEqual(run('bounds', 'eval', preset='cckk', n=100, d=10, out=path), '')
        with open(path) as handle:
            self.assertEqual(json.load(handle)['result']['preset'], 'cckk')


class SimulationCommandTestCase(CommandTestMixin, SimpleTestCase):
    """rate_study and bootstrap_study on small settings."""

    def test_rate_study(self):
        path = self.path('rate.json')
        run('rate_study', model='equicorr:0.3', d=3, n_grid='16,32,64,128', reps=200, seed=3, out=path)
        with open(path) as handle:
            report = json.load(handle)
        self.assertEqual(len(report['study']['rows']), 4)
        self.assertEqual(report['model']['dim'], 3)
        with open(self.path('rate.csv')) as handle:
            self.assertTrue(handle.readline().startswith('n,rho_hat,stderr'))

    def test_rate_study_is_deterministic(self):
        options = {'model': 'identity', 'd': 3, 'n_grid': '16,32,64,128', 'reps': 100, 'seed': 9}
        self.assertEqual(run('rate_study', **options), run('rate_study', **options))

    def test_malformed_model_exits_2(self):
        for spec in ('bogus:1', 'equicorr', 'equicorr:abc', 'two_block:x:0.1:0.1'):
            with self.subTest(spec=spec):
                with self.assertRaises(CommandError) as ctx:
                    run('rate_study', model=spec, d=3, n_grid='16,32,64,128', reps=10)
                self.assertEqual(ctx.exception.returncode, 2)
                self.assertIn('model spec', str(ctx.exception))

    def test_bad_grid_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('rate_study', model='identity', d=3, n_grid='16,32', reps=10)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_bootstrap_study(self):
        csv_path = self.path('data.csv')
        report = json.loads(run('bootstrap_study', model='equicorr:0.3', d=3, n=40, datasets=3, n_boot=100,
                                seed=2, dataset_csv=csv_path))
        self.assertEqual(len(report['datasets']), 3)
        self.assertIn('exceedance', report['summary'])
        self.assertTrue(os.path.exists(csv_path))

    def test_bootstrap_without_draws_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('bootstrap_study', d=3, n=40, datasets=2, n_boot=0)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_rate_study_grid_family(self):
        report = json.loads(run('rate_study', model='identity', d=4, n_grid='16,32,64,128', reps=100, seed=5,
                                family='grid', grid_points=3))
        self.assertEqual(report['study']['family_size'], 3 ** 4)
        with self.assertRaises(CommandError) as ctx:
            run('rate_study', model='identity', d=4, n_grid='16,32,64,128', reps=10, family='grid', grid_points=1)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_bootstrap_observed_dataset(self):
        data_path = self.path('observed.csv')
        experiment.write_dataset_csv(data_path, np.random.default_rng(8).choice([-1.0, 1.0], size=(40, 4)))
        report = json.loads(run('bootstrap_study', model='identity', d=9, n_boot=100, seed=2,
                                dataset=data_path, truncate=True))
        self.assertEqual(report['model']['dim'], 4)
        self.assertEqual(len(report['datasets']), 1)
        row = report['datasets'][0]
        self.assertEqual(len(row['sigma_n']), 16)
        self.assertEqual(len(row['w_hat']), 4)

    def test_missing_dataset_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('bootstrap_study', d=3, n_boot=10, dataset=self.path('absent.csv'))
        self.assertEqual(ctx.exception.returncode, 2)


class VerificationCommandTestCase(CommandTestMixin, SimpleTestCase):
    """verify_lemmas and compare_gaussians."""

    def test_verify_lemmas_report(self):
        report = json.loads(run('verify_lemmas', d=3, suite_size=1, points=1, samples=2000, seed=11))
        self.assertIn('summary', report)
        self.assertTrue(report['checks'])
        self.assertEqual(report['quad_spec'], settings.STEINCLT['QUAD_SPEC'])

    def test_hard_failure_exits_1_after_writing(self):
        """A failed identity gives exit 1 and the partial report is still written."""
        path = self.path('verify.json')
        with patch('steinclt.suites.verify_lemmas', side_effect=failing_suite):
            with self.assertRaises(CommandError) as ctx:
                run('verify_lemmas', out=path)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('divergence-1/#0', str(ctx.exception))
        with open(path) as handle:
            report = json.load(handle)
        self.assertEqual(report['summary']['verdict'], 'fail')
        self.assertEqual(report['checks'][1]['rhs'], 'inf')

    def test_dimension_out_of_range_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            run('verify_lemmas', d=2, suite_size=1, samples=100)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_compare_gaussians(self):
        report = json.loads(run('compare_gaussians', d=3, pairs=2, samples=2000, seed=4))
        self.assertEqual(len(report['sweep']['rows']), 2)
        self.assertEqual(report['sweep']['c_user'], 10.0)
        self.assertNotEqual(report['summary']['verdict'], 'fail')

    def test_verify_lemmas_on_a_polytope_file(self):
        path = self.path('box.txt')
        with open(path, 'w') as handle:
            handle.write(BOX)
        report = json.loads(run('verify_lemmas', d=7, suite_size=1, points=1, samples=4000, seed=11,
                                polytope=path))
        divergence = [check for check in report['checks'] if check['check_id'].startswith('divergence-')]
        self.assertEqual(len(divergence), 3)
        for check in divergence:
            self.assertIn(check['verdict'], ('pass', 'inconclusive'))

    def test_malformed_polytope_exits_2(self):
        path = self.path('bad.txt')
        with open(path, 'w') as handle:
            handle.write('3\n1 0 0\n')
        for command in ('verify_lemmas', 'compare_gaussians'):
            with self.subTest(command=command):
                with self.assertRaises(CommandError) as ctx:
                    run(command, samples=100, polytope=path)
                self.assertEqual(ctx.exception.returncode, 2)
                self.assertIn('Cannot read polytope', str(ctx.exception))

    def test_compare_gaussians_on_a_polytope_file(self):
        path = self.path('box.txt')
        with open(path, 'w') as handle:
            handle.write(BOX)
        report = json.loads(run('compare_gaussians', pairs=2, samples=2000, seed=4, polytope=path))
        self.assertEqual(report['sweep']['family_size'], 1)
        self.assertEqual(len(report['sweep']['rows']), 2)


class StoreOptionTestCase(CommandTestMixin, TestCase):
    """--store persists the run and its checks."""

    def test_store_bounds(self):
        run('bounds', 'eval', preset='cckk', n=100, d=10, store=True, seed=12)
        stored = ExperimentRun.objects.get()
        self.assertEqual((stored.command, stored.seed, stored.verdict), ('bounds', 12, 'pass'))
        self.assertEqual(stored.summary['result']['preset'], 'cckk')
        self.assertEqual(stored.checks.count(), 0)

    def test_store_checks(self):
        with patch('steinclt.suites.verify_lemmas', side_effect=failing_suite):
            with self.assertRaises(CommandError):
                run('verify_lemmas', store=True)
        stored = ExperimentRun.objects.get()
        self.assertEqual(stored.verdict, 'fail')
        self.assertEqual(list(stored.checks.values_list('check_number', flat=True)), [1, 2])
        self.assertEqual(stored.failed_checks.get().check_id, 'divergence-1/#0')
        self.assertIsNone(CheckResult.objects.get(check_number=2).rhs)

    def test_no_store_by_default(self):
        run('bounds', 'eval', preset='cckk', n=100, d=10)
        self.assertFalse(ExperimentRun.objects.exists())
