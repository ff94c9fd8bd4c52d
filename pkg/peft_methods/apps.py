from django.apps import AppConfig


class PeftMethodsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'peft_methods'
