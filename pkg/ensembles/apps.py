from django.apps import AppConfig


class EnsemblesConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ensembles'
    verbose_name = 'Parameter ensembles'

    def ready(self):
        # Connect the member bookkeeping receivers
        import ensembles.signals  # noqa: F401
