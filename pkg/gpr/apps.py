from django.apps import AppConfig


class GprConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'gpr'
    verbose_name = 'Gaussian process regression'
