# Generated by Django 6.0 on 2026-10-18 09:00

import django.db.models.deletion
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
                ('kind', models.CharField(choices=[('consensus_sweep', 'Consensus sweep'), ('logreg', 'Logistic regression'), ('single_run', 'Single run')], max_length=32)),
                ('config', models.JSONField()),
                ('config_hash', models.CharField(db_index=True, help_text='SHA256 of the canonical config JSON', max_length=64)),
                ('seeds', models.JSONField(default=list)),
                ('spectral_profile', models.JSONField(blank=True, null=True)),
                ('beta', models.FloatField(blank=True, null=True)),
                ('omega', models.FloatField(blank=True, null=True)),
                ('gamma', models.FloatField(blank=True, null=True)),
                ('eta', models.FloatField(blank=True, null=True)),
                ('status', models.CharField(blank=True, max_length=32)),
                ('output_path', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='SweepCell',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('n', models.IntegerField()),
                ('omega', models.FloatField()),
                ('gamma_policy', models.CharField(max_length=64)),
                ('rounds_to_eps', models.BigIntegerField(blank=True, null=True)),
                ('status', models.CharField(max_length=32)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='cells', to='simulations.experimentrun')),
            ],
            options={
                'ordering': ['gamma_policy', 'n', 'omega'],
            },
        ),
    ]
