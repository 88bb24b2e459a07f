from django.db.models import F
from django.db.models.signals import post_save
from django.dispatch import receiver

from .models import ExperimentRun, RunStatus, StageRecord


@receiver(post_save, sender=StageRecord)
def track_stage(sender, instance, created, **kwargs):
    """
    Completed stages bump the run's counter; a failed stage marks the whole
    run failed.
    """
    if not created:
        return
    if instance.status == RunStatus.COMPLETED:
        ExperimentRun.objects.filter(pk=instance.run_id).update(completed_stages=F('completed_stages') + 1)
    elif instance.status == RunStatus.FAILED:
        ExperimentRun.objects.filter(pk=instance.run_id).update(status=RunStatus.FAILED)
