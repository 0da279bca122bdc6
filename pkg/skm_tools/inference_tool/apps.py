from django.apps import AppConfig


class InferenceToolConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "inference_tool"
    verbose_name = "Stochastic kinetic model inference"
