import importlib
from typing import List

EXPERIMENTS_MODULE = "django_adaptive_kernels.experiments"


def autodiscover() -> List[str]:
    """
    Import the built-in experiment kinds and the modules listed in the `libraries` setting,
    so that every `@register(...)` decorator has run. Returns the imported module paths.
    """
    from django_adaptive_kernels.app_settings import app_settings
    from django_adaptive_kernels.logger import logger

    imported_modules = [EXPERIMENTS_MODULE]
    importlib.import_module(EXPERIMENTS_MODULE)

    for path_lib in app_settings.LIBRARIES:
        logger.debug(f'Importing experiment library "{path_lib}"')
        importlib.import_module(path_lib)
        imported_modules.append(path_lib)

    return imported_modules
