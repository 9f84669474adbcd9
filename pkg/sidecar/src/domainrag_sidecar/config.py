"""Sidecar configuration: bind address, model ids, declared dimensions."""

from dataclasses import dataclass, field
from typing import Dict, Tuple

from .wire import CAPABILITIES

DEFAULT_MODELS = {
    "encode": "torch-resnet18-encoder",
    "prompt_encode": "torch-resnet18-prompt",
    "feature_map": "torch-resnet50-shallow",
    "inpaint": "opencv-telea",
    "generate": "procedural-diffusion",
    "fill": "procedural-fill",
}

# Lightweight ids usable on hosts without torch/opencv.
FALLBACK_MODELS = {
    "encode": "numpy-stats-encoder",
    "prompt_encode": "numpy-stats-prompt",
    "feature_map": "numpy-grid-features",
    "inpaint": "numpy-mean-inpaint",
    "generate": "procedural-diffusion",
    "fill": "procedural-fill",
}


@dataclass
class SidecarConfig:
    host: str = "127.0.0.1"
    port: int = 8571
    encode_dim: int = 64
    prompt_dim: int = 64
    feature_channels: int = 256  # the ResNet-50 stage-1 width
    seed: int = 0
    models: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    disabled: Tuple[str, ...] = ()
    device: str = "cpu"

    def __post_init__(self):
        unknown = set(self.models) - set(CAPABILITIES)
        if unknown:
            raise ValueError(f"unknown capabilities in model map: {sorted(unknown)}")
        missing = set(CAPABILITIES) - set(self.models)
        if missing:
            raise ValueError(f"no model configured for: {sorted(missing)}")
        bad = set(self.disabled) - set(CAPABILITIES)
        if bad:
            raise ValueError(f"cannot disable unknown capabilities: {sorted(bad)}")
        if min(self.encode_dim, self.prompt_dim, self.feature_channels) < 1:
            raise ValueError("declared dimensions must be positive")

    @classmethod
    def with_fallback_models(cls, **kwargs) -> "SidecarConfig":
        kwargs.setdefault("models", dict(FALLBACK_MODELS))
        kwargs.setdefault("feature_channels", 8)
        return cls(**kwargs)
