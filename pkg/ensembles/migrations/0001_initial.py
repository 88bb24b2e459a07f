# Generated by Django 5.2.8 on 2026-10-19 09:12

import django.core.validators
import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EnsembleRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('directory', models.CharField(max_length=500, unique=True)),
                ('lx', models.PositiveSmallIntegerField(validators=[django.core.validators.MinValueValidator(2)])),
                ('ly', models.PositiveSmallIntegerField(validators=[django.core.validators.MinValueValidator(2)])),
                ('temperature', models.FloatField(help_text='Hyper-temperature T in units of J_P')),
                ('field', models.FloatField(default=0.0, help_text='Longitudinal field h')),
                ('member_count', models.PositiveIntegerField(default=0)),
                ('energy_sum', models.FloatField(default=0.0)),
                ('mean_energy', models.FloatField(blank=True, null=True)),
                ('config', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='MemberRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('member_id', models.PositiveIntegerField()),
                ('chain_id', models.PositiveIntegerField()),
                ('step', models.PositiveIntegerField()),
                ('energy_mean', models.FloatField()),
                ('energy_stderr', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0)])),
                ('w1_bar', models.FloatField(blank=True, null=True)),
                ('w2_bar', models.FloatField(blank=True, null=True)),
                ('cluster', models.IntegerField(blank=True, null=True)),
                ('ensemble', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='members', to='ensembles.ensemblerecord')),
            ],
            options={
                'ordering': ['ensemble', 'member_id'],
                'constraints': [models.UniqueConstraint(fields=('ensemble', 'member_id'), name='unique_member_per_ensemble')],
            },
        ),
    ]
