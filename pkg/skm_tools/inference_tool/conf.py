"""
App-level settings of the inference tool.

Every value can be overridden in the Django settings module with the same name;
``skm_tools/settings.py`` reads them from the environment with python-decouple.
"""

from django.conf import settings

DEFAULTS = {
    "SKM_DEFAULT_BUDGET": 10 ** 6,
    "SKM_FULL_BUDGET": 10 ** 8,
    "SKM_WORKERS": 1,
    "SKM_OUTPUT_DIR": "runs",
    "SKM_TUNING_BAND": (1.5, 1.8),
    "SKM_ACCEPTANCE_BAND": (0.25, 2.25),
    "SKM_TUNING_REPS": 20,
    "SKM_TUNING_START": 8,
    "SKM_MAX_PARTICLES": 10 ** 4,
    "SKM_PILOT_SIZE": 10 ** 4,
    "SKM_PILOT_QUANTILE": 0.01,
    "SKM_TOLERANCE_QUANTILE": 0.5,
    "SKM_POPULATION_SIZE": 10 ** 4,
    "SKM_ABC_BATCH_SIZE": 256,
    "SKM_ORACLE_STATE_CAP": 2 * 10 ** 5,
    "SKM_ORACLE_TOL": 1e-10,
    "SKM_ORACLE_LOST_MASS": 1e-6,
    "SKM_REPLICATES": 5,
    "SKM_MODE_THRESHOLD": 250,
    "SKM_MAX_EVENTS": 10 ** 7,
}


def get_setting(name):
    """Return the configured value of ``name``, falling back to its default"""
    return getattr(settings, name, DEFAULTS[name])
