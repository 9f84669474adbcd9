"""Inference sidecar serving the background-augmentation wire protocol."""

__version__ = "0.1.0"

from .config import DEFAULT_MODELS, FALLBACK_MODELS, SidecarConfig
from .service import SidecarService, create_app

__all__ = ["DEFAULT_MODELS", "FALLBACK_MODELS", "SidecarConfig", "SidecarService", "create_app"]
