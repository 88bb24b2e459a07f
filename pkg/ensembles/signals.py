from django.db.models import F
from django.db.models.signals import post_delete, post_save
from django.dispatch import receiver

from .models import EnsembleRecord, MemberRecord


@receiver(post_save, sender=MemberRecord)
def count_new_member(sender, instance, created, **kwargs):
    """
    Keeps the parent ensemble's member count and mean energy current when a
    member row is created. Counters are updated in the database with F().
    """
    if not created:
        return
    EnsembleRecord.objects.filter(pk=instance.ensemble_id).update(
        member_count=F('member_count') + 1,
        energy_sum=F('energy_sum') + instance.energy_mean,
    )
    _refresh_mean(instance.ensemble_id)


@receiver(post_delete, sender=MemberRecord)
def forget_member(sender, instance, **kwargs):
    EnsembleRecord.objects.filter(pk=instance.ensemble_id).update(
        member_count=F('member_count') - 1,
        energy_sum=F('energy_sum') - instance.energy_mean,
    )
    _refresh_mean(instance.ensemble_id)


def _refresh_mean(ensemble_id):
    record = EnsembleRecord.objects.filter(pk=ensemble_id).only('member_count', 'energy_sum').first()
    if record is None:
        return
    mean = record.energy_sum / record.member_count if record.member_count else None
    EnsembleRecord.objects.filter(pk=ensemble_id).update(mean_energy=mean)
