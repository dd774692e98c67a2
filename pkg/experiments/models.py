from django.db import models


class ExperimentRun(models.Model):
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    ]

    COMMAND_CHOICES = [
        ('synth', 'Synthesize'),
        ('pipeline', 'Pipeline'),
        ('gpr', 'GPR'),
        ('xlstm', 'xLSTM'),
        ('forecast', 'Forecast'),
        ('eval', 'Evaluate'),
    ]

    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    failed_stage = models.CharField(max_length=50, blank=True)
    error = models.TextField(blank=True)
    seed = models.IntegerField(default=0)
    config = models.JSONField(default=dict)
    metrics = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    def __str__(self):
        return f"{self.command} #{self.pk} ({self.status})"

    class Meta:
        ordering = ['-started_at']
