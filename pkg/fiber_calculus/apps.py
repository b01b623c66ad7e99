from django.apps import AppConfig


class FiberCalculusConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'fiber_calculus'
    verbose_name = 'Fourier calculus on the circle bundle'
