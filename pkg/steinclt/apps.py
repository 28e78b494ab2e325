from django.apps import AppConfig


class SteinCLTConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'steinclt'
    verbose_name = 'High-dimensional CLT verification'
