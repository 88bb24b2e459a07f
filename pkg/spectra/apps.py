from django.apps import AppConfig


class SpectraConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'spectra'
    verbose_name = 'Similarity and diffusion spectra'
