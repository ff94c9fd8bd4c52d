from django.apps import AppConfig


class TensorEngineConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'tensor_engine'
