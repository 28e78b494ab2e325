# Generated by Django 6.0 on 2026-10-18 09:12

import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=64)),
                ('seed', models.BigIntegerField()),
                ('schema_version', models.CharField(max_length=16)),
                ('artifact_version', models.CharField(max_length=32)),
                ('config', models.JSONField(default=dict, help_text='Fully resolved run configuration')),
                ('summary', models.JSONField(default=dict, help_text='Report body without the per-check records')),
                ('verdict', models.CharField(choices=[('pass', 'Pass'), ('fail', 'Fail'), ('inconclusive', 'Inconclusive'), ('error', 'Error')], default='pass', max_length=16)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='CheckResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('check_number', models.IntegerField()),
                ('check_id', models.CharField(max_length=128)),
                ('lhs', models.FloatField(blank=True, null=True)),
                ('lhs_stderr', models.FloatField(blank=True, null=True)),
                ('rhs', models.FloatField(blank=True, help_text='Bound or oracle value; empty when infinite', null=True)),
                ('ratio', models.FloatField(blank=True, null=True)),
                ('n_samples', models.IntegerField(default=0)),
                ('seed', models.BigIntegerField()),
                ('verdict', models.CharField(choices=[('pass', 'Pass'), ('fail', 'Fail'), ('inconclusive', 'Inconclusive'), ('error', 'Error')], max_length=16)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='checks', to='steinclt.experimentrun')),
            ],
            options={
                'ordering': ['check_number'],
                'unique_together': {('run', 'check_number')},
            },
        ),
    ]
