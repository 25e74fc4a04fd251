from django.contrib import admin
from .models import ConvergenceSample, ExperimentRun, RefinementRecord, WelfareRow


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ['id', 'kind', 'status', 'output_path', 'created_at', 'updated_at']
    list_filter = ['kind', 'status', 'created_at']
    search_fields = ['output_path', 'error']
    readonly_fields = ['created_at', 'updated_at']
    list_per_page = 25
    ordering = ['-created_at']

    fieldsets = (
        ('Basic Information', {
            'fields': ('kind', 'status', 'output_path', 'created_at', 'updated_at')
        }),
        ('Configuration', {
            'fields': ('config',),
            'classes': ('collapse',)
        }),
        ('Failure', {
            'fields': ('error',),
            'classes': ('collapse',)
        }),
    )


@admin.register(WelfareRow)
class WelfareRowAdmin(admin.ModelAdmin):
    list_display = ['run', 'width', 'height', 'turns', 'gamma', 'blueprint', 'blueprint_welfare', 'refined_welfare']
    list_filter = ['blueprint', 'turns', 'gamma']
    search_fields = ['blueprint']
    raw_id_fields = ['run']
    list_per_page = 25


@admin.register(ConvergenceSample)
class ConvergenceSampleAdmin(admin.ModelAdmin):
    list_display = ['run', 'iteration', 'violation', 'elapsed']
    raw_id_fields = ['run']
    list_per_page = 50


@admin.register(RefinementRecord)
class RefinementRecordAdmin(admin.ModelAdmin):
    list_display = ['id', 'game', 'blueprint', 'subgame', 'method', 'status', 'subgame_welfare',
                    'blueprint_welfare', 'max_violation', 'converged', 'created_at']
    list_filter = ['method', 'status', 'converged', 'created_at']
    search_fields = ['game', 'blueprint']
    readonly_fields = ['created_at']
    raw_id_fields = ['run']
    list_per_page = 25
    ordering = ['-created_at']

    fieldsets = (
        ('Basic Information', {
            'fields': ('run', 'game', 'blueprint', 'subgame', 'method', 'status', 'created_at')
        }),
        ('Results', {
            'fields': ('subgame_welfare', 'blueprint_welfare', 'max_violation', 'iterations', 'elapsed', 'converged'),
        }),
        ('Diagnostics', {
            'fields': ('stats',),
            'classes': ('collapse',)
        }),
    )
