from django.db import models


class RunStatus(models.TextChoices):
    PENDING = 'pending', 'Pending'
    RUNNING = 'running', 'Running'
    COMPLETED = 'completed', 'Completed'
    FAILED = 'failed', 'Failed'


class ExperimentRun(models.Model):
    """
    One execution of a config into an output directory. The manifest on disk
    is authoritative; this row and its stages mirror it for the admin.
    """
    KIND_CHOICES = [('run', 'Single run'), ('sweep', 'Field sweep')]

    name = models.CharField(max_length=100)
    kind = models.CharField(max_length=10, choices=KIND_CHOICES, default='run')
    config_hash = models.CharField(max_length=64, db_index=True)
    output_dir = models.CharField(max_length=500, unique=True)
    status = models.CharField(max_length=12, choices=RunStatus.choices, default=RunStatus.PENDING)
    completed_stages = models.PositiveSmallIntegerField(default=0)
    sector_count = models.PositiveSmallIntegerField(blank=True, null=True)
    warnings = models.JSONField(default=list, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.name} [{self.status}] {self.output_dir}"


class StageRecord(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='stages')
    stage = models.CharField(max_length=20)
    position = models.PositiveSmallIntegerField(default=0)
    status = models.CharField(max_length=12, choices=RunStatus.choices, default=RunStatus.PENDING)
    cached = models.BooleanField(default=False, help_text="Reused from an earlier run with the same key")
    key = models.CharField(max_length=64, blank=True)
    wall_seconds = models.FloatField(default=0.0)
    error = models.TextField(blank=True)

    class Meta:
        ordering = ['run', 'position']
        constraints = [
            models.UniqueConstraint(fields=['run', 'stage'], name='unique_stage_per_run'),
        ]

    def __str__(self):
        return f"{self.stage} ({self.status})"


class Artifact(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='artifacts')
    stage = models.CharField(max_length=20)
    path = models.CharField(max_length=500)
    sha256 = models.CharField(max_length=64)
    size = models.PositiveBigIntegerField(default=0)

    class Meta:
        ordering = ['run', 'stage', 'path']

    def __str__(self):
        return self.path
