"""Adapter exposing third-party graph classifiers behind the victim wire protocol."""

from .adapter import (
    AdapterConfig,
    ModelInput,
    ModelLoadError,
    SchemaError,
    convert_graph,
    load_model,
    serve,
    serve_streams,
)

__all__ = [
    "AdapterConfig",
    "ModelInput",
    "ModelLoadError",
    "SchemaError",
    "convert_graph",
    "load_model",
    "serve",
    "serve_streams",
]
