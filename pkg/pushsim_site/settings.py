import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("PUSHSIM_SECRET", "change-me-in-prod")

DEBUG = True

# Allow access from any host when PUSHSIM_ALLOWED_HOSTS is set, otherwise localhost only
ALLOWED_HOSTS = [host.strip() for host in os.environ.get("PUSHSIM_ALLOWED_HOSTS", "localhost,127.0.0.1").split(",")]

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "simulations",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "pushsim_site.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {"context_processors": ["django.template.context_processors.debug",
                                           "django.template.context_processors.request",
                                           "django.contrib.auth.context_processors.auth",
                                           "django.contrib.messages.context_processors.messages"]},
    }
]

WSGI_APPLICATION = "pushsim_site.wsgi.application"
ASGI_APPLICATION = "pushsim_site.asgi.application"

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}

AUTH_PASSWORD_VALIDATORS = []

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True
STATIC_URL = "/static/"
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Simulation defaults; every key can be overridden with PUSHSIM_<KEY>
PUSHSIM = {
    "OUTPUT_DIR": os.environ.get("PUSHSIM_OUTPUT_DIR", str(BASE_DIR / "runs")),
    "CONSENSUS_BUDGET": int(os.environ.get("PUSHSIM_CONSENSUS_BUDGET", 1_000_000)),
    "SGD_BUDGET": int(os.environ.get("PUSHSIM_SGD_BUDGET", 10_000)),
    "VALUE_BITS": int(os.environ.get("PUSHSIM_VALUE_BITS", 32)),
    "DIVERGENCE_THRESHOLD": float(os.environ.get("PUSHSIM_DIVERGENCE_THRESHOLD", 1e12)),
    # 0 means max(2n, 200)
    "SPECTRAL_HORIZON": int(os.environ.get("PUSHSIM_SPECTRAL_HORIZON", 0)),
    "JOBS": int(os.environ.get("PUSHSIM_JOBS", 1)),
    "LOG_LEVEL": os.environ.get("PUSHSIM_LOG_LEVEL", "INFO"),
}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "simulations": {"handlers": ["console"], "level": PUSHSIM["LOG_LEVEL"], "propagate": False},
    },
}
