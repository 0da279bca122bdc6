from pathlib import Path

from django.db import models

from . import persistence


class InferenceRun(models.Model):
    """A command-line run and the directory holding its output"""

    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"
    STATUS_CHOICES = [(RUNNING, "Running"), (FINISHED, "Finished"), (FAILED, "Failed")]

    command = models.CharField(max_length=50)
    model = models.CharField(max_length=200)
    regime = models.CharField(max_length=20, blank=True)
    seed = models.BigIntegerField(null=True, blank=True)
    budget = models.BigIntegerField(null=True, blank=True)
    consumed = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=RUNNING)
    message = models.TextField(blank=True)
    created = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        """Show a meaningful represtation of model"""
        return f"{self.command} {self.model} {self.regime} (seed {self.seed})"

    def summary(self):
        """Persisted summary of the run, or None when it has none"""
        path = Path(self.output_dir) / persistence.SUMMARY_FILE
        if not self.output_dir or not path.exists():
            return None
        return persistence.read_json(path)

    class Meta:
        ordering = ["-created"]
