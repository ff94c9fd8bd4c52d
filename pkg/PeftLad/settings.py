"""
Django settings for PeftLad project.

PeftLad is driven entirely through management commands; there is no HTTP
surface, so the request/response settings of a web project are left out.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used for Django's signing helpers; nothing here is served.
SECRET_KEY = os.getenv("PEFT_LAD_SECRET_KEY", "peft-lad-local-only")

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",
    "rest_framework",
    "core",
    "tensor_engine",
    "log_pipeline",
    "tokenizer",
    "model_core",
    "peft_methods",
    "training",
    "eval_harness",
]


# Database
# https://docs.djangoproject.com/en/5.1/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.getenv("PEFT_LAD_DB", BASE_DIR / "db.sqlite3"),
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/5.1/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging
# https://docs.djangoproject.com/en/5.1/topics/logging/

LOG_LEVEL = os.getenv("PEFT_LAD_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        app: {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False}
        for app in (
            "core",
            "tensor_engine",
            "log_pipeline",
            "tokenizer",
            "model_core",
            "peft_methods",
            "training",
            "eval_harness",
        )
    },
}


# PEFT log anomaly detection defaults
# Flags on the command line override a JSON config file, which overrides these.

PEFT_LAD = {
    "SEED": int(os.getenv("PEFT_LAD_SEED", "42")),
    "DATASET": {
        "format": "labeled-lines",
        "grouping": "window",
        "window": 50,
        "stride": None,  # None means stride == window (tumbling windows)
        "train_ratio": 0.8,
        "header_fields": 0,
        "min_count": 1,
        "max_len": 256,
    },
    "MODEL": {
        "style": "masked",
        "layers": 2,
        "hidden": 64,
        "heads": 4,
        "ffn_dim": 256,
        "activation": "gelu",
        "dropout": 0.0,
    },
    "LORA": {
        "rank": 128,
        "alpha": 256.0,
        "targets": ["query", "value"],
    },
    "REFT": {
        "rank": 8,
    },
    "TRAIN": {
        "learning_rate": 1e-4,
        "batch_size": 32,
        "epochs": 3,
        "weight_decay": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "precision": "float32",
        "class_weight": None,
    },
    "SWEEP": {
        "ranks": [1, 2, 4, 8, 16, 32, 64, 128],
        "ratios": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        "rates": [0.01, 0.02, 0.03, 0.05, 0.10, 0.20, 0.30],
        "inject_epochs": 1,
        "test_fraction": 0.2,
        "jobs": 1,
    },
}
