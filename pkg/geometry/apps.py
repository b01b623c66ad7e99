from django.apps import AppConfig


class GeometryConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'geometry'
    verbose_name = 'Thermostat scene geometry'
