"""Simulator backends: reference engines and the external-process protocol."""

from .backends import (
    GENERIC_SETTINGS,
    ExternalBackend,
    SimResult,
    SimulationTimeout,
    UnknownBackendError,
    backend_names,
    build_model,
    generic_assignment,
    get_backend,
    register_backend,
    simulate,
)
from .scene import ObjectSpec, SceneSpec

__all__ = [
    "GENERIC_SETTINGS",
    "ExternalBackend",
    "ObjectSpec",
    "SceneSpec",
    "SimResult",
    "SimulationTimeout",
    "UnknownBackendError",
    "backend_names",
    "build_model",
    "generic_assignment",
    "get_backend",
    "register_backend",
    "simulate",
]
