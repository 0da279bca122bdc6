from django.urls import path

from . import views

urlpatterns = [
    path("models", views.get_models),
    path("simulate", views.get_simulation),
    path("runs", views.get_runs),
    path("runs/<int:run_id>", views.get_run),
]
