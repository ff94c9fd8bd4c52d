from django.apps import AppConfig


class LogPipelineConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'log_pipeline'
