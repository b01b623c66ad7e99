import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
# Try to load .env.local first (for development), then .env
if os.path.exists('.env.local'):
    load_dotenv('.env.local')
else:
    load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing here is served over HTTP
SECRET_KEY = os.environ.get('SECRET_KEY', 'thermostat-lab-local-key')

DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',

    # Third party apps
    'rest_framework',

    # Local apps
    'geometry',
    'flow',
    'transport',
    'fiber_calculus',
    'inversion',
    'experiments',
]

# Experiments persist to flat files only
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework settings (serializers are used for config validation only)
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
}

# Experiment output and cache locations
THERMOSTAT_OUTPUT_DIR = os.environ.get('THERMOSTAT_OUTPUT_DIR', str(BASE_DIR / 'runs'))
THERMOSTAT_CACHE_DIR = os.environ.get('THERMOSTAT_CACHE_DIR', str(BASE_DIR / '.cache'))
THERMOSTAT_THREADS = int(os.environ.get('THERMOSTAT_THREADS', '1'))
THERMOSTAT_CACHE_ENABLED = os.environ.get('THERMOSTAT_CACHE_ENABLED', 'True').lower() == 'true'

# Logging
LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()
LOG_FILE = os.environ.get('LOG_FILE', '')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'verbose' if DEBUG else 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        name: {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        }
        for name in ('geometry', 'flow', 'transport', 'fiber_calculus', 'inversion', 'experiments')
    },
}

if LOG_FILE:
    LOGGING['handlers']['file'] = {
        'level': LOG_LEVEL,
        'class': 'logging.FileHandler',
        'filename': LOG_FILE,
        'formatter': 'verbose',
    }
    for logger_config in LOGGING['loggers'].values():
        logger_config['handlers'].append('file')
    LOGGING['root']['handlers'].append('file')
