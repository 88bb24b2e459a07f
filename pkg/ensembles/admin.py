from django.contrib import admin

from .models import EnsembleRecord, MemberRecord


class MemberInline(admin.TabularInline):
    model = MemberRecord
    extra = 0
    fields = ('member_id', 'chain_id', 'step', 'energy_mean', 'energy_stderr', 'w1_bar', 'w2_bar', 'cluster')
    readonly_fields = fields


@admin.register(EnsembleRecord)
class EnsembleRecordAdmin(admin.ModelAdmin):
    list_display = ('directory', 'lx', 'ly', 'temperature', 'field', 'member_count', 'mean_energy', 'created_at')
    list_filter = ('temperature', 'field')
    inlines = [MemberInline]


@admin.register(MemberRecord)
class MemberRecordAdmin(admin.ModelAdmin):
    list_display = ('ensemble', 'member_id', 'chain_id', 'step', 'energy_mean', 'cluster')
    list_filter = ('cluster',)
