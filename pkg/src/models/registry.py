"""Name-to-factory registry for the compiled-in models."""
from typing import Callable, Dict, List

from ..core.exceptions import UnknownModelError
from .base import ModelDefinition

ModelFactory = Callable[..., ModelDefinition]

_REGISTRY: Dict[str, ModelFactory] = {}


def register(name: str) -> Callable[[ModelFactory], ModelFactory]:
    """Decorator adding a model factory under ``name``."""
    def decorator(factory: ModelFactory) -> ModelFactory:
        if name in _REGISTRY:
            raise ValueError(f"model '{name}' registered twice")
        _REGISTRY[name] = factory
        return factory
    return decorator


def build(name: str, **options) -> ModelDefinition:
    """Instantiate a registered model, passing model-specific options to its factory."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownModelError(name, list(_REGISTRY)) from None
    return factory(**options)


def available() -> List[str]:
    return sorted(_REGISTRY)
