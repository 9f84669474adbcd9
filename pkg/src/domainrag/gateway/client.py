"""Gateway the pipeline calls instead of any concrete model.

One binding per capability wraps a raw backend (in-process fake or HTTP
endpoint) with the endpoint policy: bounded in-flight concurrency, retries
with exponential backoff for transient faults, and validation of every
reply against the declared dimensions before anything reaches a caller.
Contract violations are never retried — a backend that answers wrongly will
answer wrongly again.
"""

import threading
import time
from typing import Callable, Mapping, Optional

import numpy as np

from ..errors import BackendUnavailable, DimensionError, ProtocolViolation
from ..geometry import as_image, as_mask
from . import wire
from .fakes import FakeModelSuite
from .types import GENERATED_SIZE, BackendEndpoint, Capability, GenerationParams

__all__ = ["ModelGateway", "HttpCapabilityClient"]


class HttpCapabilityClient:
    """Raw calls for one capability over the wire protocol."""

    def __init__(self, endpoint: BackendEndpoint, session_factory=None):
        import requests

        self.endpoint = endpoint
        self.url = endpoint.address.rstrip("/") + endpoint.capability.route
        self._factory = session_factory or requests.Session
        self._local = threading.local()
        self._requests = requests

    def _session(self):
        if not hasattr(self._local, "session"):
            self._local.session = self._factory()
        return self._local.session

    def __call__(self, **kwargs):
        cap = self.endpoint.capability
        body = wire.encode_request(cap, **kwargs)
        try:
            resp = self._session().post(self.url, json=body, timeout=self.endpoint.timeout_ms / 1000.0)
        except self._requests.RequestException as exc:
            raise BackendUnavailable(f"{cap.value} backend unreachable at {self.url}: {exc}") from exc
        if resp.status_code >= 500:
            raise BackendUnavailable(f"{cap.value} backend fault: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            try:
                err = resp.json().get("error", {})
            except ValueError:
                err = {}
            raise ProtocolViolation(
                f"{cap.value} backend rejected the request (HTTP {resp.status_code}): "
                f"{err.get('code')}: {err.get('message')}"
            )
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(f"{cap.value} reply is not JSON: {exc}") from exc
        return wire.decode_response(cap, payload)


class _Binding:
    def __init__(self, call: Callable, endpoint: BackendEndpoint):
        self.call = call
        self.endpoint = endpoint
        self.gate = threading.Semaphore(endpoint.max_in_flight)


def _fake_endpoint(capability: Capability) -> BackendEndpoint:
    return BackendEndpoint(capability=capability, address="fake://local")


class ModelGateway:
    """Uniform, validated access to the six model capabilities."""

    def __init__(
        self,
        backends: Mapping[Capability, Callable],
        endpoints: Optional[Mapping[Capability, BackendEndpoint]] = None,
        declared: Optional[dict] = None,
        backoff_base_s: float = 0.05,
        sleep: Callable[[float], None] = time.sleep,
    ):
        missing = set(Capability) - set(backends)
        if missing:
            raise ProtocolViolation(f"no backend bound for: {sorted(c.value for c in missing)}")
        endpoints = endpoints or {}
        self._bindings = {
            cap: _Binding(backends[cap], endpoints.get(cap, _fake_endpoint(cap)))
            for cap in Capability
        }
        declared = declared or {}
        self._dims = {
            key: declared.get(key)
            for key in ("encode_dim", "prompt_dim", "feature_channels")
        }
        self._dims_lock = threading.Lock()
        self._backoff_base_s = backoff_base_s
        self._sleep = sleep

    @classmethod
    def with_fakes(cls, seed: int = 0, suite: Optional[FakeModelSuite] = None, **kwargs) -> "ModelGateway":
        suite = suite or FakeModelSuite(seed=seed)
        backends = {
            Capability.ENCODE: suite.encode,
            Capability.FEATURE_MAP: suite.feature_map,
            Capability.INPAINT: suite.inpaint,
            Capability.PROMPT_ENCODE: suite.prompt_encode,
            Capability.GENERATE: suite.generate,
            Capability.FILL: suite.fill,
        }
        gw = cls(backends, declared=suite.declared, **kwargs)
        gw.fake_suite = suite
        return gw

    @classmethod
    def from_endpoints(
        cls, endpoints: Mapping[Capability, BackendEndpoint], declared: Optional[dict] = None, **kwargs
    ) -> "ModelGateway":
        backends = {cap: HttpCapabilityClient(ep) for cap, ep in endpoints.items()}
        return cls(backends, endpoints=endpoints, declared=declared, **kwargs)

    # -- plumbing ---------------------------------------------------------

    def _invoke(self, capability: Capability, **kwargs):
        binding = self._bindings[capability]
        attempts = binding.endpoint.max_retries + 1
        with binding.gate:
            for attempt in range(attempts):
                try:
                    return binding.call(**kwargs)
                except BackendUnavailable:
                    if attempt == attempts - 1:
                        raise
                    self._sleep(self._backoff_base_s * (2.0**attempt))

    def _lock_dim(self, key: str, observed: int, what: str):
        with self._dims_lock:
            known = self._dims.get(key)
            if known is None:
                self._dims[key] = observed
            elif known != observed:
                raise ProtocolViolation(f"{what} drifted: declared {known}, backend sent {observed}")

    def declared_dim(self, key: str) -> Optional[int]:
        with self._dims_lock:
            return self._dims.get(key)

    # -- capabilities -----------------------------------------------------

    def encode_image(self, image) -> np.ndarray:
        img = as_image(image)
        vec = self._invoke(Capability.ENCODE, image=img)
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1 or not np.all(np.isfinite(vec)):
            raise ProtocolViolation(f"encoder reply is not a finite vector (shape {vec.shape})")
        self._lock_dim("encode_dim", vec.size, "encoder dimension")
        return vec

    def extract_feature_map(self, image) -> np.ndarray:
        img = as_image(image)
        fmap = self._invoke(Capability.FEATURE_MAP, image=img)
        fmap = np.asarray(fmap, dtype=np.float64)
        if fmap.ndim != 3 or not np.all(np.isfinite(fmap)):
            raise ProtocolViolation(f"feature-map reply is not a finite (C, H, W) array (shape {fmap.shape})")
        self._lock_dim("feature_channels", fmap.shape[0], "feature-map channel count")
        return fmap

    def inpaint_background(self, image, mask) -> np.ndarray:
        img = as_image(image)
        m = as_mask(mask)
        if img.shape[:2] != m.shape:
            raise DimensionError(f"mask {m.shape} does not match image {img.shape[:2]}")
        out = self._invoke(Capability.INPAINT, image=img, mask=m)
        out = as_image(out)
        if out.shape != img.shape:
            raise ProtocolViolation(f"inpainter changed dimensions: {img.shape} -> {out.shape}")
        return out

    def encode_prompt(self, image) -> np.ndarray:
        img = as_image(image)
        vec = self._invoke(Capability.PROMPT_ENCODE, image=img)
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1 or not np.all(np.isfinite(vec)):
            raise ProtocolViolation(f"prompt-encoder reply is not a finite vector (shape {vec.shape})")
        self._lock_dim("prompt_dim", vec.size, "prompt dimension")
        return vec

    def generate_background(self, prompt, params: GenerationParams) -> np.ndarray:
        vec = np.asarray(prompt, dtype=np.float64)
        known = self.declared_dim("prompt_dim")
        if known is not None and vec.size != known:
            raise DimensionError(f"prompt has dim {vec.size}, backend declares {known}")
        out = self._invoke(Capability.GENERATE, prompt=vec, params=params)
        out = as_image(out)
        if out.shape[:2] != (GENERATED_SIZE, GENERATED_SIZE):
            raise ProtocolViolation(
                f"generator must return {GENERATED_SIZE}x{GENERATED_SIZE}, got "
                f"{out.shape[1]}x{out.shape[0]}"
            )
        return out

    def fill_masked(self, image, mask, prompt, params: GenerationParams) -> np.ndarray:
        img = as_image(image)
        m = as_mask(mask)
        if img.shape[:2] != m.shape:
            raise DimensionError(f"mask {m.shape} does not match image {img.shape[:2]}")
        vec = np.asarray(prompt, dtype=np.float64)
        known = self.declared_dim("prompt_dim")
        if known is not None and vec.size != known:
            raise DimensionError(f"prompt has dim {vec.size}, backend declares {known}")
        out = self._invoke(Capability.FILL, image=img, mask=m, prompt=vec, params=params)
        out = as_image(out)
        if out.shape != img.shape:
            raise ProtocolViolation(f"filler changed dimensions: {img.shape} -> {out.shape}")
        return out
