"""Server-side wire protocol: decode requests, encode replies.

This is an independent implementation of the protocol the augmentation
pipeline's gateway speaks (JSON bodies; base64 PNG images; single-channel
{0,255} PNG masks; prompt arrays; generation params). The shipped
conformance suite is the contract keeping the two sides honest.
"""

import base64
import binascii
import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

CAPABILITIES = ("encode", "feature_map", "inpaint", "prompt_encode", "generate", "fill")

REQUEST_FIELDS = {
    "encode": ("image",),
    "feature_map": ("image",),
    "inpaint": ("image", "mask"),
    "prompt_encode": ("image",),
    "generate": ("prompt", "params"),
    "fill": ("image", "mask", "prompt", "params"),
}


class RequestError(Exception):
    """Maps straight onto an HTTP error response."""

    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.status = status

    def body(self) -> dict:
        return {"error": {"code": self.code, "message": str(self)}}


@dataclass(frozen=True)
class GenerationParams:
    guidance_scale: float
    num_steps: int
    noise_strength: float
    seed: int


def _decode_b64(field: str, value) -> bytes:
    if not isinstance(value, str):
        raise RequestError(f"bad_{field}", f"{field} must be a base64 string")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise RequestError(f"bad_{field}", f"{field} is not valid base64: {exc}") from exc


def decode_image(value) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(_decode_b64("image", value))) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except RequestError:
        raise
    except (UnidentifiedImageError, OSError) as exc:
        raise RequestError("bad_image", f"image does not decode as PNG: {exc}") from exc


def decode_mask(value) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(_decode_b64("mask", value))) as im:
            gray = np.asarray(im.convert("L"), dtype=np.uint8)
    except RequestError:
        raise
    except (UnidentifiedImageError, OSError) as exc:
        raise RequestError("bad_mask", f"mask does not decode as PNG: {exc}") from exc
    if not np.isin(gray, (0, 255)).all():
        raise RequestError("bad_mask", "mask PNG must contain only values 0 and 255")
    return (gray == 255).astype(np.uint8)


def decode_prompt(value) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise RequestError("bad_prompt", "prompt must be a non-empty array of numbers")
    try:
        arr = np.asarray([float(v) for v in value], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise RequestError("bad_prompt", f"prompt entries must be numbers: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise RequestError("bad_prompt", "prompt entries must be finite")
    return arr


def decode_params(value) -> GenerationParams:
    if not isinstance(value, dict):
        raise RequestError("bad_params", "params must be an object")
    missing = {"guidance_scale", "num_steps", "noise_strength", "seed"} - value.keys()
    if missing:
        raise RequestError("bad_params", f"params missing fields: {sorted(missing)}")
    try:
        params = GenerationParams(
            guidance_scale=float(value["guidance_scale"]),
            num_steps=int(value["num_steps"]),
            noise_strength=float(value["noise_strength"]),
            seed=int(value["seed"]),
        )
    except (TypeError, ValueError) as exc:
        raise RequestError("bad_params", f"params fields have wrong types: {exc}") from exc
    if not math.isfinite(params.guidance_scale) or params.guidance_scale <= 0:
        raise RequestError("bad_params", "guidance_scale must be finite and positive")
    if params.num_steps < 1:
        raise RequestError("bad_params", "num_steps must be >= 1")
    if not math.isfinite(params.noise_strength) or not 0.0 <= params.noise_strength <= 1.0:
        raise RequestError("bad_params", "noise_strength must lie in [0, 1]")
    if not 0 <= params.seed < 2**64:
        raise RequestError("bad_params", "seed must be an unsigned 64-bit integer")
    return params


def decode_request(capability: str, payload) -> dict:
    if not isinstance(payload, dict):
        raise RequestError("bad_request", "request body must be a JSON object")
    out = {}
    for field in REQUEST_FIELDS[capability]:
        if field not in payload:
            raise RequestError("missing_field", f"request is missing required field {field!r}")
        if field == "image":
            out["image"] = decode_image(payload[field])
        elif field == "mask":
            out["mask"] = decode_mask(payload[field])
        elif field == "prompt":
            out["prompt"] = decode_prompt(payload[field])
        else:
            out["params"] = decode_params(payload[field])
    if "mask" in out and out["mask"].shape != out["image"].shape[:2]:
        raise RequestError(
            "dimension_mismatch",
            f"mask {out['mask'].shape} does not match image {out['image'].shape[:2]}",
        )
    return out


def encode_image_reply(image: np.ndarray) -> dict:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return {"image": base64.b64encode(buf.getvalue()).decode("ascii")}


def encode_embedding_reply(vector: np.ndarray) -> dict:
    return {"embedding": [float(v) for v in np.asarray(vector, dtype=np.float64)]}


def encode_feature_map_reply(fmap: np.ndarray) -> dict:
    arr = np.asarray(fmap, dtype=np.float64)
    return {
        "embedding": [float(v) for v in arr.ravel()],
        "shape": [int(s) for s in arr.shape],
    }
