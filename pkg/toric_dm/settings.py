"""
Django settings for the toric_dm project.

Hosts the sector-detection library apps (wavefunctions, ensembles, spectra)
and the experiment orchestration app, whose run and ensemble records live
in the database configured below.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'TORIC_DM_SECRET_KEY',
    'django-insecure-3v!t0r1c-dm-local-only-r7e@k8)_p4q9x2',
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('TORIC_DM_DEBUG', '1') == '1'

ALLOWED_HOSTS = [
    '127.0.0.1',
    'localhost',
]

# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'wavefunctions.apps.WavefunctionsConfig',
    'ensembles.apps.EnsemblesConfig',
    'spectra.apps.SpectraConfig',
    'experiments.apps.ExperimentsConfig',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'toric_dm.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]


# Database
# Run, stage and ensemble records; the artifacts themselves live on disk.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (admin only)

STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Experiments

# Default root for run output directories when a config gives a relative path
EXPERIMENT_ROOT = Path(os.environ.get('TORIC_DM_EXPERIMENT_ROOT', BASE_DIR / 'runs'))

# Exact enumeration sums over 2**n configurations; refuse anything larger
ENUMERATION_MAX_SPINS = 20

# Similarity matrices up to this size are also exported as CSV
SIMILARITY_CSV_MAX_M = 200


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': os.environ.get('TORIC_DM_LOG_LEVEL', 'INFO'),
            'propagate': False,
        }
        for app in ('wavefunctions', 'ensembles', 'spectra', 'experiments')
    },
}
