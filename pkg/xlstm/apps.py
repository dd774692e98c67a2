from django.apps import AppConfig


class XlstmConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'xlstm'
    verbose_name = 'xLSTM regressor'
