"""Model backend abstraction: capabilities, wire protocol, fakes, client."""

from .client import HttpCapabilityClient, ModelGateway
from .fakes import FakeModelSuite
from .types import GENERATED_SIZE, BackendEndpoint, Capability, GenerationParams

__all__ = [
    "BackendEndpoint",
    "Capability",
    "FakeModelSuite",
    "GENERATED_SIZE",
    "GenerationParams",
    "HttpCapabilityClient",
    "ModelGateway",
]
