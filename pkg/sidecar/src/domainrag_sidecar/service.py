"""HTTP service: six capability routes plus /v1/health.

Request handling per model is serialized with a lock (generation models
are not assumed reentrant); FastAPI runs the sync handlers in a thread
pool, so concurrent requests queue at the lock.
"""

import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from . import wire
from .adapters import GENERATED_SIZE, AdapterLoadError, build_adapter
from .config import SidecarConfig


def _probe_image() -> np.ndarray:
    iy = np.arange(32)[:, None]
    ix = np.arange(32)[None, :]
    return np.stack(
        [(ix * 5 + iy) % 256, (ix + iy * 3) % 256, (ix * 2 + iy * 7) % 256], axis=2
    ).astype(np.uint8)


class SidecarService:
    """Adapters, declared dimensions, and the dispatch logic."""

    def __init__(self, config: SidecarConfig):
        self.config = config
        self.adapters = {}
        self.locks = {}
        for cap in wire.CAPABILITIES:
            if cap in config.disabled:
                continue
            self.adapters[cap] = build_adapter(cap, config.models[cap], config)
            self.locks[cap] = threading.Lock()
        self._verify_declared_dims()
        self.deterministic = all(
            getattr(a, "deterministic", False) for a in self.adapters.values()
        )

    def _verify_declared_dims(self):
        probe = _probe_image()
        checks = {
            "encode": ("encode_dim", lambda a: np.asarray(a(probe)).shape[0]),
            "prompt_encode": ("prompt_dim", lambda a: np.asarray(a(probe)).shape[0]),
            "feature_map": ("feature_channels", lambda a: np.asarray(a(probe)).shape[0]),
        }
        for cap, (attr, measure) in checks.items():
            if cap not in self.adapters:
                continue
            declared = getattr(self.config, attr)
            actual = int(measure(self.adapters[cap]))
            if actual != declared:
                raise AdapterLoadError(
                    f"{cap}: declared {attr}={declared} but model "
                    f"{self.config.models[cap]!r} produces {actual}"
                )
        if "generate" in self.adapters:
            size = getattr(self.adapters["generate"], "size", None)
            if size != GENERATED_SIZE:
                raise AdapterLoadError(f"generate: model must produce 1024x1024, declares {size}")

    def health(self) -> dict:
        return {
            "status": "ready",
            "capabilities": sorted(self.adapters),
            "models": {cap: self.config.models[cap] for cap in self.adapters},
            "declared": {
                "encode_dim": self.config.encode_dim,
                "prompt_dim": self.config.prompt_dim,
                "feature_channels": self.config.feature_channels,
                "deterministic": self.deterministic,
            },
            "generate_size": 1024,
        }

    def dispatch(self, capability: str, payload) -> dict:
        decoded = wire.decode_request(capability, payload)
        if "prompt" in decoded and decoded["prompt"].shape[0] != self.config.prompt_dim:
            raise wire.RequestError(
                "dimension_mismatch",
                f"prompt has dimension {decoded['prompt'].shape[0]}, "
                f"this service declares {self.config.prompt_dim}",
            )
        adapter = self.adapters[capability]
        with self.locks[capability]:
            if capability in ("encode", "prompt_encode"):
                return wire.encode_embedding_reply(adapter(decoded["image"]))
            if capability == "feature_map":
                return wire.encode_feature_map_reply(adapter(decoded["image"]))
            if capability == "inpaint":
                return wire.encode_image_reply(adapter(decoded["image"], decoded["mask"]))
            if capability == "generate":
                return wire.encode_image_reply(adapter(decoded["prompt"], decoded["params"]))
            return wire.encode_image_reply(
                adapter(decoded["image"], decoded["mask"], decoded["prompt"], decoded["params"])
            )


def create_app(config: SidecarConfig) -> FastAPI:
    service = SidecarService(config)
    app = FastAPI(title="domainrag-sidecar", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.get("/v1/health")
    def health():
        return service.health()

    @app.post("/v1/{capability}")
    async def capability_route(capability: str, request: Request):
        if capability not in wire.CAPABILITIES:
            return JSONResponse(
                status_code=404,
                content={"error": {"code": "unknown_route", "message": f"no such route: /v1/{capability}"}},
            )
        if capability in service.config.disabled:
            return JSONResponse(
                status_code=503,
                content={"error": {"code": "capability_disabled",
                                   "message": f"{capability} is disabled on this instance"}},
            )
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse(
                status_code=400,
                content={"error": {"code": "bad_request", "message": "body must be valid JSON"}},
            )
        try:
            # threadpool keeps slow model calls off the event loop; the
            # per-capability locks inside dispatch do the serializing
            body = await run_in_threadpool(service.dispatch, capability, payload)
            return JSONResponse(status_code=200, content=body)
        except wire.RequestError as exc:
            return JSONResponse(status_code=exc.status, content=exc.body())
        except Exception as exc:  # model fault
            return JSONResponse(
                status_code=500,
                content={"error": {"code": "internal", "message": str(exc)}},
            )

    @app.post("/{path:path}")
    async def unknown_route(path: str, request: Request):
        return JSONResponse(
            status_code=404,
            content={"error": {"code": "unknown_route", "message": f"no such route: /{path}"}},
        )

    return app
