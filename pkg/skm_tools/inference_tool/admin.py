from django.contrib import admin
from .models import InferenceRun


@admin.register(InferenceRun)
class InferenceRunAdmin(admin.ModelAdmin):
    list_display = ("id", "command", "model", "regime", "seed", "budget", "status", "created")
    list_filter = ("command", "status")
