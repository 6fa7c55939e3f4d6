import django
from django.conf import settings

if not settings.configured:
    settings.configure(
        INSTALLED_APPS=("django_adaptive_kernels",),
        ADAPTIVE_KERNELS={"bootstrap_resamples": 200, "vg_restarts": 16},
        DATABASES={
            "default": {
                "ENGINE": "django.db.backends.sqlite3",
                "NAME": ":memory:",
            }
        },
    )

    django.setup()
