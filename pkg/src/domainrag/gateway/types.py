"""Capability names, endpoint descriptions, and generation parameters."""

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

__all__ = ["Capability", "BackendEndpoint", "GenerationParams", "GENERATED_SIZE"]

# Generated backgrounds are always square at this edge length.
GENERATED_SIZE = 1024

_MAX_SEED = 2**64 - 1


class Capability(enum.Enum):
    """The six model roles the pipeline consumes."""

    ENCODE = "encode"
    FEATURE_MAP = "feature_map"
    INPAINT = "inpaint"
    PROMPT_ENCODE = "prompt_encode"
    GENERATE = "generate"
    FILL = "fill"

    @property
    def route(self) -> str:
        return f"/v1/{self.value}"


ROUTE_TO_CAPABILITY = {cap.route: cap for cap in Capability}


@dataclass(frozen=True)
class BackendEndpoint:
    """Where one capability lives and how hard to lean on it."""

    capability: Capability
    address: str
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValidationError(f"timeout_ms must be positive, got {self.timeout_ms}")
        if self.max_retries < 0:
            raise ValidationError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_in_flight < 1:
            raise ValidationError(f"max_in_flight must be >= 1, got {self.max_in_flight}")


@dataclass(frozen=True)
class GenerationParams:
    """Knobs forwarded verbatim to generative backends."""

    guidance_scale: float
    num_steps: int
    noise_strength: float
    seed: int

    def __post_init__(self):
        if not np.isfinite(self.guidance_scale) or self.guidance_scale <= 0:
            raise ValidationError(f"guidance_scale must be finite and positive, got {self.guidance_scale!r}")
        if not isinstance(self.num_steps, int) or self.num_steps < 1:
            raise ValidationError(f"num_steps must be a positive integer, got {self.num_steps!r}")
        if not np.isfinite(self.noise_strength) or not 0.0 <= self.noise_strength <= 1.0:
            raise ValidationError(f"noise_strength must lie in [0, 1], got {self.noise_strength!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= _MAX_SEED:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def to_wire(self) -> dict:
        return {
            "guidance_scale": self.guidance_scale,
            "num_steps": self.num_steps,
            "noise_strength": self.noise_strength,
            "seed": self.seed,
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "GenerationParams":
        if not isinstance(payload, dict):
            raise ValidationError(f"params must be an object, got {type(payload).__name__}")
        missing = {"guidance_scale", "num_steps", "noise_strength", "seed"} - payload.keys()
        if missing:
            raise ValidationError(f"params missing fields: {sorted(missing)}")
        try:
            return cls(
                guidance_scale=float(payload["guidance_scale"]),
                num_steps=int(payload["num_steps"]),
                noise_strength=float(payload["noise_strength"]),
                seed=int(payload["seed"]),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"params fields have wrong types: {exc}") from exc
