from typing import TYPE_CHECKING, Callable, Dict, Type, TypeVar

if TYPE_CHECKING:
    from django_adaptive_kernels.experiments import base

_TE = TypeVar("_TE", bound=Type["base.Experiment"])


class AlreadyRegistered(Exception):
    pass


class NotRegistered(Exception):
    pass


class ExperimentRegistry:
    def __init__(self) -> None:
        self._registry: Dict[str, Type["base.Experiment"]] = {}  # kind -> experiment class

    def register(self, name: str, experiment: Type["base.Experiment"]) -> None:
        existing = self._registry.get(name)
        if existing and existing is not experiment:
            raise AlreadyRegistered('The experiment kind "%s" has already been registered' % name)
        self._registry[name] = experiment

    def unregister(self, name: str) -> None:
        self.get(name)

        del self._registry[name]

    def get(self, name: str) -> Type["base.Experiment"]:
        if name not in self._registry:
            raise NotRegistered('The experiment kind "%s" is not registered' % name)

        return self._registry[name]

    def all(self) -> Dict[str, Type["base.Experiment"]]:
        return self._registry

    def clear(self) -> None:
        self._registry = {}


# This variable represents the global experiment registry
registry: ExperimentRegistry = ExperimentRegistry()


def register(name: str) -> Callable[[_TE], _TE]:
    """Class decorator to register an experiment kind.

    Usage:

    @register("risk_curve")
    class RiskCurve(Experiment):
        ...
    """

    def decorator(experiment: _TE) -> _TE:
        experiment.kind = name
        registry.register(name=name, experiment=experiment)
        return experiment

    return decorator
