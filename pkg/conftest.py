import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'thermostat_lab.settings')
django.setup()
