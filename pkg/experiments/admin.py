from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('command', 'status', 'failed_stage', 'seed', 'output_dir', 'started_at', 'finished_at')
    list_filter = ('command', 'status', 'started_at')
    search_fields = ('output_dir', 'failed_stage', 'error')
    readonly_fields = ('config', 'metrics', 'started_at', 'finished_at')
