"""
Django settings for Gaitcast project.

Gaitcast is a desk-scale toolkit for predicting lower-limb joint kinematics
from surface EMG. The Django project hosts the run history (admin), the
management commands that make up the command-line surface, and the default
experiment configuration in ``GAITCAST``.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Quick-start development settings - unsuitable for production
# See https://docs.djangoproject.com/en/5.2/howto/deployment/checklist/

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'GAITCAST_SECRET_KEY',
    'django-insecure-gaitcast-local-only-k3v!x0q#7z2m@r9p',
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('GAITCAST_DEBUG', '0') == '1'

ALLOWED_HOSTS = ['localhost', '127.0.0.1']


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'core',
    'ingest',
    'preprocess',
    'features',
    'gpr',
    'xlstm',
    'lag_forecaster',
    'experiments',
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

ROOT_URLCONF = 'Gaitcast.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'Gaitcast.wsgi.application'


# Database
# Holds the experiment run history only; numeric outputs never go through it.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('GAITCAST_DB', BASE_DIR / 'db.sqlite3'),
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


# Logging
# GAITCAST_LOG sets the level for every gaitcast logger (DEBUG shows per-step losses).

GAITCAST_LOG_LEVEL = os.environ.get('GAITCAST_LOG', 'WARNING').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'stage': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'formatter': 'stage',
        },
    },
    'root': {
        'handlers': ['stderr'],
        'level': GAITCAST_LOG_LEVEL,
    },
    'loggers': {
        'django': {
            'handlers': ['stderr'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}


# Experiment defaults
# Every command resolves its configuration as: these defaults, then the JSON
# file given with --config, then command-line flags.

GAITCAST = {
    'seed': 0,
    'threads': 1,
    'denoise': {
        'wavelet_threshold': 0.08,
        'decomposition_level': 8,
        'threshold_mode': 'soft',
        'wavelet': 'db4',
        'pad': True,
        'keep_approximation': False,
    },
    'filter': {
        'order': 7,
        'kind': 'bandpass',
        'cutoff_hz': [20.0, 450.0],
        'sample_rate_hz': 1926.0,
    },
    'window': {
        'window_len': 100,
        'overlap': 50,
    },
    'features': {
        'stages': ['correct', 'denoise', 'filter', 'normalize'],
        'zc_threshold': 0.0,
        'standardizer_scope': 'record',
    },
    'split': {
        'train_fraction': 0.8,
    },
    'gpr': {
        'signal_variance': 'optimize',
        'length_scale': 'optimize',
        'noise_variance': 1e-6,
        'max_train_rows': 2000,
        'optimize_rows': 300,
        'starts': 5,
    },
    'xlstm': {
        'hidden_size': 32,
        'num_layers': 2,
        'num_heads': 4,
        'conv_kernel': 4,
        'block_pattern': ['m', 's'],
        'slstm_proj_factor': 4 / 3,
        'mlstm_proj_factor': 2.0,
        'learning_rate': 0.01,
        'train_steps': 20,
        'sequence_len': 64,
    },
    'forecast': {
        'horizon': 128,
        'context_len': 256,
        'fine_tune_context_len': 512,
        'num_samples': 100,
        'lags': list(range(1, 65)),
        'd_model': 64,
        'num_layers': 2,
        'num_heads': 4,
        'learning_rate': 1e-3,
        'batch_size': 32,
        'batches_per_epoch': 16,
        'epochs': 50,
        'patience': 5,
        'scale_floor': 1e-6,
    },
}
