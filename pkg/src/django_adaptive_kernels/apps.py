from django.apps import AppConfig


class AdaptiveKernelsConfig(AppConfig):
    name = "django_adaptive_kernels"
    verbose_name = "Adaptive kernel estimation lab"

    def ready(self) -> None:
        self.module.autodiscover()
