from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """One command invocation and its report summary."""
    VERDICT_CHOICES = [
        ('pass', 'Pass'),
        ('fail', 'Fail'),
        ('inconclusive', 'Inconclusive'),
        ('error', 'Error'),
    ]

    command = models.CharField(max_length=64)
    seed = models.BigIntegerField()
    schema_version = models.CharField(max_length=16)
    artifact_version = models.CharField(max_length=32)
    config = models.JSONField(default=dict, help_text="Fully resolved run configuration")
    summary = models.JSONField(default=dict, help_text="Report body without the per-check records")
    verdict = models.CharField(max_length=16, choices=VERDICT_CHOICES, default='pass')
    created_at = models.DateTimeField(default=timezone.now)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.command} (seed {self.seed})"

    @property
    def failed_checks(self):
        return self.checks.filter(verdict='fail')


class CheckResult(models.Model):
    """A single verification check inside a run."""
    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name='checks'
    )
    check_number = models.IntegerField()
    check_id = models.CharField(max_length=128)
    lhs = models.FloatField(null=True, blank=True)
    lhs_stderr = models.FloatField(null=True, blank=True)
    rhs = models.FloatField(null=True, blank=True, help_text="Bound or oracle value; empty when infinite")
    ratio = models.FloatField(null=True, blank=True)
    n_samples = models.IntegerField(default=0)
    seed = models.BigIntegerField()
    verdict = models.CharField(max_length=16, choices=ExperimentRun.VERDICT_CHOICES)

    class Meta:
        ordering = ['check_number']
        unique_together = ['run', 'check_number']

    def __str__(self):
        return f"{self.run.command} - Check {self.check_number} ({self.check_id})"
