from django.apps import AppConfig


class EvalHarnessConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'eval_harness'
