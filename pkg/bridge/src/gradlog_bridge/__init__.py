"""Reference torch-backed server for the gradlog neural bridge protocol."""

from .models import CnnModel, LinearModel, MlpModel, build_models
from .server import serve

__all__ = ["CnnModel", "LinearModel", "MlpModel", "build_models", "serve"]
