# Generated by Django 4.2.22

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
                ('kind', models.CharField(choices=[('welfare', 'Welfare'), ('convergence', 'Convergence'), ('refine', 'Refine')], max_length=20)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('config', models.JSONField(default=dict)),
                ('output_path', models.CharField(blank=True, default='', max_length=500)),
                ('error', models.TextField(blank=True, default='')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='WelfareRow',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('width', models.IntegerField()),
                ('height', models.IntegerField(default=1)),
                ('ship', models.IntegerField(default=1)),
                ('turns', models.IntegerField()),
                ('gamma', models.FloatField()),
                ('blueprint', models.CharField(max_length=100)),
                ('seeds', models.IntegerField(default=1)),
                ('subgame_pairs', models.IntegerField(default=0)),
                ('blueprint_welfare', models.FloatField()),
                ('refined_welfare', models.FloatField()),
                ('max_violation', models.FloatField(default=0.0)),
                ('seconds', models.FloatField(default=0.0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='welfare_rows', to='resolver.experimentrun')),
            ],
            options={
                'ordering': ['run', 'id'],
            },
        ),
        migrations.CreateModel(
            name='ConvergenceSample',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('iteration', models.IntegerField()),
                ('violation', models.FloatField()),
                ('elapsed', models.FloatField(default=0.0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='samples', to='resolver.experimentrun')),
            ],
            options={
                'ordering': ['run', 'iteration'],
            },
        ),
        migrations.CreateModel(
            name='RefinementRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('game', models.CharField(max_length=255)),
                ('blueprint', models.CharField(default='uniform', max_length=100)),
                ('subgame', models.IntegerField()),
                ('method', models.CharField(choices=[('lp', 'Linear program'), ('cfr', 'Self-play')], max_length=10)),
                ('status', models.CharField(max_length=30)),
                ('subgame_welfare', models.FloatField()),
                ('blueprint_welfare', models.FloatField()),
                ('max_violation', models.FloatField()),
                ('iterations', models.IntegerField(default=0)),
                ('elapsed', models.FloatField(default=0.0)),
                ('converged', models.BooleanField(default=True)),
                ('stats', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='refinements', to='resolver.experimentrun')),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
