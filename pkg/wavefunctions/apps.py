from django.apps import AppConfig


class WavefunctionsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'wavefunctions'
    verbose_name = 'Toric code wavefunctions'
