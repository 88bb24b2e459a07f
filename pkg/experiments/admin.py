from django.contrib import admin

from .models import Artifact, ExperimentRun, StageRecord


class StageInline(admin.TabularInline):
    model = StageRecord
    extra = 0
    fields = ('stage', 'status', 'cached', 'wall_seconds', 'error')
    readonly_fields = fields


class ArtifactInline(admin.TabularInline):
    model = Artifact
    extra = 0
    fields = ('stage', 'path', 'sha256', 'size')
    readonly_fields = fields


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('name', 'kind', 'status', 'completed_stages', 'sector_count', 'config_hash', 'created_at')
    list_filter = ('kind', 'status')
    search_fields = ('name', 'config_hash', 'output_dir')
    inlines = [StageInline, ArtifactInline]


@admin.register(Artifact)
class ArtifactAdmin(admin.ModelAdmin):
    list_display = ('path', 'stage', 'sha256', 'size', 'run')
    list_filter = ('stage',)
