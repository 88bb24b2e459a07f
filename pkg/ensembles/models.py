from django.core.validators import MinValueValidator
from django.db import models


class EnsembleRecord(models.Model):
    """
    Database mirror of one ensemble directory. The directory stays the source
    of truth; ``member_count`` and ``mean_energy`` are kept current by the
    MemberRecord post_save receiver.
    """
    directory = models.CharField(max_length=500, unique=True)
    lx = models.PositiveSmallIntegerField(validators=[MinValueValidator(2)])
    ly = models.PositiveSmallIntegerField(validators=[MinValueValidator(2)])
    temperature = models.FloatField(help_text="Hyper-temperature T in units of J_P")
    field = models.FloatField(default=0.0, help_text="Longitudinal field h")
    member_count = models.PositiveIntegerField(default=0)
    energy_sum = models.FloatField(default=0.0)
    mean_energy = models.FloatField(blank=True, null=True)
    config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"Ensemble {self.lx}x{self.ly} T={self.temperature:g} h={self.field:g} ({self.member_count} members)"


class MemberRecord(models.Model):
    ensemble = models.ForeignKey(EnsembleRecord, on_delete=models.CASCADE, related_name='members')
    member_id = models.PositiveIntegerField()
    chain_id = models.PositiveIntegerField()
    step = models.PositiveIntegerField()
    energy_mean = models.FloatField()
    energy_stderr = models.FloatField(validators=[MinValueValidator(0.0)])
    w1_bar = models.FloatField(blank=True, null=True)
    w2_bar = models.FloatField(blank=True, null=True)
    cluster = models.IntegerField(blank=True, null=True)

    class Meta:
        ordering = ['ensemble', 'member_id']
        constraints = [
            models.UniqueConstraint(fields=['ensemble', 'member_id'], name='unique_member_per_ensemble'),
        ]

    @property
    def sector(self):
        """(sign W1, sign W2) label, None until Wilson loops are measured."""
        if self.w1_bar is None or self.w2_bar is None:
            return None
        return (1 if self.w1_bar >= 0 else -1, 1 if self.w2_bar >= 0 else -1)

    def __str__(self):
        return f"Member {self.member_id} (chain {self.chain_id}, step {self.step})"
