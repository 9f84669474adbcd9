"""Pipeline configuration, per-domain presets, and the flat config format.

Config files are flat `key = value` lines ('#' starts a comment). Keys map
one-to-one onto PipelineConfig fields — nested parameter blocks are
flattened with a generator_/filler_/endpoint_ prefix — and unknown keys are
an error: a misspelled hyperparameter must never silently fall back to its
default.

Defaults: 100 semantic candidates re-ranked to 5, five outputs per support
image, fusion weights 1.0/0.8, generator at guidance 2.5 with 50 steps,
filler at guidance 30.0 with per-domain noise strength supplied by the
presets.
"""

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

from .embedding import FusionWeights
from .errors import ConfigError, ValidationError
from .gateway.types import BackendEndpoint, Capability, GenerationParams
from .geometry import ResamplePolicy

__all__ = [
    "FusionMode",
    "DomainPreset",
    "PRESETS",
    "PipelineConfig",
    "parse_config_file",
    "load_config",
    "endpoints_from_env",
    "ENDPOINTS_ENV_VAR",
]

ENDPOINTS_ENV_VAR = "DOMAINRAG_ENDPOINTS"

DEFAULT_GENERATOR_PARAMS = GenerationParams(guidance_scale=2.5, num_steps=50, noise_strength=1.0, seed=0)
DEFAULT_FILLER_PARAMS = GenerationParams(guidance_scale=30.0, num_steps=50, noise_strength=0.8, seed=0)


class FusionMode(enum.Enum):
    """How the n retrieved candidates feed the n generations.

    PER_CANDIDATE fuses each retrieved background once (the default: the n
    retrieved images each get a purpose). TOP1_MULTISEED fuses only the top
    candidate and varies the generation seed instead.
    """

    PER_CANDIDATE = "per_candidate"
    TOP1_MULTISEED = "top1_multiseed"


@dataclass(frozen=True)
class DomainPreset:
    name: str
    filler_noise_strength: float
    resample_policy: ResamplePolicy

    def __post_init__(self):
        if not 0.0 <= self.filler_noise_strength <= 1.0:
            raise ValidationError(f"noise strength must lie in [0, 1], got {self.filler_noise_strength}")


PRESETS: Dict[str, DomainPreset] = {
    p.name: p
    for p in (
        DomainPreset("artaxor", 0.9, ResamplePolicy.INTEGER_EDGE_2800),
        DomainPreset("clipart1k", 0.9, ResamplePolicy.DOUBLE_BELOW_1024),
        DomainPreset("dior", 0.8, ResamplePolicy.DOUBLE_BELOW_1024),
        DomainPreset("deepfish", 0.8, ResamplePolicy.DOUBLE_BELOW_1024),
        DomainPreset("neu-det", 0.3, ResamplePolicy.DOUBLE_BELOW_1024),
        DomainPreset("nwpu-vhr-10", 0.8, ResamplePolicy.DOUBLE_BELOW_1024),
        DomainPreset("camouflage", 0.6, ResamplePolicy.DOUBLE_BELOW_1024),
        DomainPreset("uodd", 0.4, ResamplePolicy.LONGEST_SIDE_2048),
    )
}


@dataclass(frozen=True)
class PipelineConfig:
    m: int = 100
    n_retrieve: int = 5
    n_generate: int = 5
    weights: FusionWeights = field(default_factory=lambda: FusionWeights(1.0, 0.8))
    generator_params: GenerationParams = DEFAULT_GENERATOR_PARAMS
    filler_params: GenerationParams = DEFAULT_FILLER_PARAMS
    resample_policy: ResamplePolicy = ResamplePolicy.DOUBLE_BELOW_1024
    endpoints: tuple = ()  # ((capability value, address), ...) sorted
    seed: int = 0
    include_support_in_pool: bool = False
    fusion_mode: FusionMode = FusionMode.PER_CANDIDATE
    workers: int = 1
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if self.m < 1 or self.n_retrieve < 1 or self.n_generate < 0:
            raise ConfigError(
                f"m/n_retrieve must be positive and n_generate >= 0, got "
                f"{self.m}/{self.n_retrieve}/{self.n_generate}"
            )
        if self.n_retrieve > self.m:
            raise ConfigError(f"n_retrieve={self.n_retrieve} must not exceed m={self.m}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.timeout_ms < 1 or self.max_retries < 0 or self.max_in_flight < 1:
            raise ConfigError("endpoint policy values out of range")

    def endpoint_map(self) -> Dict[Capability, str]:
        return {Capability(cap): addr for cap, addr in self.endpoints}

    def backend_endpoints(self) -> Dict[Capability, BackendEndpoint]:
        return {
            cap: BackendEndpoint(
                capability=cap,
                address=addr,
                timeout_ms=self.timeout_ms,
                max_retries=self.max_retries,
                max_in_flight=self.max_in_flight,
            )
            for cap, addr in self.endpoint_map().items()
        }

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n_retrieve": self.n_retrieve,
            "n_generate": self.n_generate,
            "lambda1": self.weights.lambda1,
            "lambda2": self.weights.lambda2,
            "generator_params": self.generator_params.to_wire(),
            "filler_params": self.filler_params.to_wire(),
            "resample_policy": self.resample_policy.value,
            "endpoints": sorted(self.endpoints),
            "seed": self.seed,
            "include_support_in_pool": self.include_support_in_pool,
            "fusion_mode": self.fusion_mode.value,
            "workers": self.workers,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "max_in_flight": self.max_in_flight,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def with_preset(self, preset: DomainPreset) -> "PipelineConfig":
        return replace(
            self,
            filler_params=replace(self.filler_params, noise_strength=preset.filler_noise_strength),
            resample_policy=preset.resample_policy,
        )


_INT_KEYS = {"m", "n_retrieve", "n_generate", "seed", "workers", "timeout_ms",
             "max_retries", "max_in_flight", "generator_num_steps", "filler_num_steps",
             "generator_seed", "filler_seed"}
_FLOAT_KEYS = {"lambda1", "lambda2", "generator_guidance_scale", "filler_guidance_scale",
               "generator_noise_strength", "filler_noise_strength"}
_BOOL_KEYS = {"include_support_in_pool"}
_STR_KEYS = {"resample_policy", "fusion_mode"}
_ENDPOINT_KEYS = {f"endpoint_{cap.value}" for cap in Capability}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS | _ENDPOINT_KEYS


def parse_config_file(path) -> Dict[str, str]:
    """Read a flat key=value file; unknown keys are a hard error."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            low = value.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return value
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _apply_overrides(config: PipelineConfig, raw: Dict[str, str]) -> PipelineConfig:
    gen = config.generator_params
    fil = config.filler_params
    weights = config.weights
    endpoints = dict(config.endpoints)
    simple = {}
    for key, raw_value in raw.items():
        value = _convert(key, raw_value)
        if key in ("lambda1", "lambda2"):
            weights = FusionWeights(
                value if key == "lambda1" else weights.lambda1,
                value if key == "lambda2" else weights.lambda2,
            )
        elif key.startswith("generator_"):
            gen = replace(gen, **{key.removeprefix("generator_"): value})
        elif key.startswith("filler_"):
            fil = replace(fil, **{key.removeprefix("filler_"): value})
        elif key.startswith("endpoint_"):
            endpoints[key.removeprefix("endpoint_")] = value
        elif key == "resample_policy":
            try:
                simple[key] = ResamplePolicy(value)
            except ValueError:
                raise ConfigError(
                    f"unknown resample_policy {value!r}; choose from "
                    f"{[p.value for p in ResamplePolicy]}"
                ) from None
        elif key == "fusion_mode":
            try:
                simple[key] = FusionMode(value)
            except ValueError:
                raise ConfigError(
                    f"unknown fusion_mode {value!r}; choose from {[m.value for m in FusionMode]}"
                ) from None
        else:
            simple[key] = value
    try:
        return replace(
            config,
            weights=weights,
            generator_params=gen,
            filler_params=fil,
            endpoints=tuple(sorted(endpoints.items())),
            **simple,
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def endpoints_from_env(value: Optional[str] = None) -> Dict[str, str]:
    """Parse DOMAINRAG_ENDPOINTS: either one base URL for every capability
    or comma-separated capability=url pairs."""
    if value is None:
        value = os.environ.get(ENDPOINTS_ENV_VAR, "")
    value = value.strip()
    if not value:
        return {}
    if "=" not in value:
        return {cap.value: value for cap in Capability}
    out = {}
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, addr = part.partition("=")
        key = key.strip()
        if key not in {cap.value for cap in Capability}:
            raise ConfigError(f"{ENDPOINTS_ENV_VAR}: unknown capability {key!r}")
        out[key] = addr.strip()
    return out


def load_config(
    path=None,
    preset: Optional[str] = None,
    overrides: Optional[Dict[str, str]] = None,
    env_endpoints: Optional[str] = None,
) -> PipelineConfig:
    """Assemble the effective config: defaults < file < preset < overrides < env."""
    config = PipelineConfig()
    if path is not None:
        config = _apply_overrides(config, parse_config_file(path))
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        config = config.with_preset(PRESETS[preset])
    if overrides:
        unknown = set(overrides) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config = _apply_overrides(config, overrides)
    env = endpoints_from_env(env_endpoints)
    if env:
        merged = dict(config.endpoints)
        merged.update(env)
        config = replace(config, endpoints=tuple(sorted(merged.items())))
    return config
