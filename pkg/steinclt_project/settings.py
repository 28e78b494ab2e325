"""
Django settings for steinclt_project project.

The project has no web surface: Django provides the configuration layer,
the management-command CLI, the test runner and the ORM that stores run
reports. Numerical defaults for the steinclt app live in ``STEINCLT``.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env if present
load_dotenv(BASE_DIR / ".env")


SECRET_KEY = os.environ.get('SECRET_KEY', 'steinclt-insecure-local-only')

DEBUG = os.environ.get('DEBUG', 'False').lower() in ('1', 'true', 'yes')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'steinclt',
]


# Database
# Only used when a command is run with --store.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('STEINCLT_DB', BASE_DIR / 'db.sqlite3'),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'steinclt': {
            'handlers': ['console'],
            'level': os.environ.get('STEINCLT_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Numerical defaults
# RunConfig resolution: command-line flags > --config file > these values.

STEINCLT = {
    'SEED': int(os.environ.get('STEINCLT_SEED', '20240601')),
    'SAMPLES': int(os.environ.get('STEINCLT_SAMPLES', '200000')),
    'QUAD_SPEC': {'rule': 'gauss-legendre', 'nodes': 64, 's_cap': 40.0},
    'C_EMP_BUDGET': 30.0,
    'STDERR_MULTIPLIER': 4.0,
    # checks whose stderr exceeds this are reported "inconclusive", not failed
    'INCONCLUSIVE_STDERR': 0.02,
    'SCHEMA_VERSION': '1',
    'FORMAT': 'json',
}
