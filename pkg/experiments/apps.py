from django.apps import AppConfig


class ExperimentsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'experiments'
    verbose_name = 'Sector detection experiments'

    def ready(self):
        # Connect the stage bookkeeping receivers
        import experiments.signals  # noqa: F401
