from django.apps import AppConfig


class LagForecasterConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'lag_forecaster'
    verbose_name = 'Lag-feature forecaster'
