from django.db import IntegrityError, transaction
from django.test import TestCase

from steinclt.models import CheckResult, ExperimentRun


class ExperimentRunModelTestCase(TestCase):
    """Persisted runs and their check records."""

    def setUp(self):
        """Set up a run with two checks."""
        self.run = ExperimentRun.objects.create(
            command='verify_lemmas',
            seed=20240601,
            schema_version='1',
            artifact_version='0.3.0',
            config={'d': 3},
            summary={'verdict': 'fail'},
            verdict='fail',
        )
        CheckResult.objects.create(run=self.run, check_number=2, check_id='nazarov/#0/e0.1',
                                   lhs=0.03, lhs_stderr=0.001, rhs=0.35, ratio=0.09,
                                   n_samples=1000, seed=1, verdict='pass')
        CheckResult.objects.create(run=self.run, check_number=1, check_id='divergence-2/#0',
                                   lhs=0.1, lhs_stderr=0.0, rhs=0.2, ratio=None,
                                   n_samples=1000, seed=1, verdict='fail')

    def test_str(self):
        self.assertEqual(str(self.run), 'verify_lemmas (seed 20240601)')
        self.assertEqual(str(self.run.checks.first()), 'verify_lemmas - Check 1 (divergence-2/#0)')

    def test_checks_are_ordered(self):
        self.assertEqual(list(self.run.checks.values_list('check_number', flat=True)), [1, 2])

    def test_failed_checks(self):
        self.assertEqual([c.check_id for c in self.run.failed_checks], ['divergence-2/#0'])

    def test_check_numbers_are_unique_per_run(self):
        with self.assertRaises(IntegrityError):
            with transaction.atomic():
                CheckResult.objects.create(run=self.run, check_number=1, check_id='dup', seed=1, verdict='pass')

    def test_runs_newest_first(self):
        later = ExperimentRun.objects.create(command='bounds', seed=1, schema_version='1',
                                             artifact_version='0.3.0', verdict='pass')
        self.assertEqual(ExperimentRun.objects.first(), later)

    def test_cascade(self):
        self.run.delete()
        self.assertFalse(CheckResult.objects.exists())
