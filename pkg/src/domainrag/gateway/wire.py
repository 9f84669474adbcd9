"""Wire protocol: HTTP/1.1 + JSON bodies, one POST route per capability.

Request fields (per capability):
    encode, feature_map, prompt_encode : {"image"}
    inpaint                            : {"image", "mask"}
    generate                           : {"prompt", "params"}
    fill                               : {"image", "mask", "prompt", "params"}

"image" is a base64 PNG (RGB); "mask" is a base64 single-channel PNG whose
values {0, 255} map to mask values {0, 1}; "prompt" is a JSON array of
numbers; "params" carries guidance_scale / num_steps / noise_strength / seed.

Responses carry {"embedding": [...]} for encoder routes (feature_map adds
"shape": [C, H, W] since a flat array cannot carry its own geometry) or
{"image": "<base64 PNG>"} for image routes. Errors are
{"error": {"code", "message"}} with 4xx for contract violations and 5xx for
backend faults.
"""

import base64
import binascii
import math

import numpy as np

from ..errors import ProtocolViolation
from ..imageio import (
    image_from_png_bytes,
    image_to_png_bytes,
    mask_from_png_bytes,
    mask_to_png_bytes,
)
from .types import Capability, GenerationParams

__all__ = [
    "WireError",
    "REQUEST_FIELDS",
    "encode_request",
    "decode_request",
    "embedding_response",
    "feature_map_response",
    "image_response",
    "error_body",
    "decode_response",
]


class WireError(Exception):
    """A malformed request, reportable to the client as an HTTP status."""

    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.status = status

    def body(self) -> dict:
        return error_body(self.code, str(self))


REQUEST_FIELDS = {
    Capability.ENCODE: ("image",),
    Capability.FEATURE_MAP: ("image",),
    Capability.INPAINT: ("image", "mask"),
    Capability.PROMPT_ENCODE: ("image",),
    Capability.GENERATE: ("prompt", "params"),
    Capability.FILL: ("image", "mask", "prompt", "params"),
}


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(field: str, value) -> bytes:
    if not isinstance(value, str):
        raise WireError("bad_" + field, f"{field} must be a base64 string")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise WireError("bad_" + field, f"{field} is not valid base64: {exc}") from exc


def encode_request(capability: Capability, image=None, mask=None, prompt=None, params=None) -> dict:
    """Build the JSON body for one capability call."""
    body = {}
    fields = REQUEST_FIELDS[capability]
    if "image" in fields:
        body["image"] = _b64(image_to_png_bytes(image))
    if "mask" in fields:
        body["mask"] = _b64(mask_to_png_bytes(mask))
    if "prompt" in fields:
        body["prompt"] = [float(v) for v in np.asarray(prompt, dtype=np.float64)]
    if "params" in fields:
        body["params"] = params.to_wire()
    return body


def decode_request(capability: Capability, payload: dict) -> dict:
    """Validate and decode a request body into numpy/param objects.

    Raises WireError (status 400) on every contract violation so servers
    can answer uniformly.
    """
    if not isinstance(payload, dict):
        raise WireError("bad_request", "request body must be a JSON object")
    out = {}
    for field in REQUEST_FIELDS[capability]:
        if field not in payload:
            raise WireError("missing_field", f"request is missing required field {field!r}")
        value = payload[field]
        if field == "image":
            try:
                out["image"] = image_from_png_bytes(_unb64("image", value))
            except Exception as exc:
                if isinstance(exc, WireError):
                    raise
                raise WireError("bad_image", f"image does not decode as PNG: {exc}") from exc
        elif field == "mask":
            try:
                out["mask"] = mask_from_png_bytes(_unb64("mask", value))
            except Exception as exc:
                if isinstance(exc, WireError):
                    raise
                raise WireError("bad_mask", f"mask does not decode as a binary PNG: {exc}") from exc
        elif field == "prompt":
            if not isinstance(value, list) or not value:
                raise WireError("bad_prompt", "prompt must be a non-empty array of numbers")
            try:
                arr = np.asarray([float(v) for v in value], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise WireError("bad_prompt", f"prompt entries must be numbers: {exc}") from exc
            if not np.all(np.isfinite(arr)):
                raise WireError("bad_prompt", "prompt entries must be finite")
            out["prompt"] = arr
        elif field == "params":
            try:
                out["params"] = GenerationParams.from_wire(value)
            except Exception as exc:
                raise WireError("bad_params", f"params invalid: {exc}") from exc
    if capability in (Capability.INPAINT, Capability.FILL):
        img, mask = out["image"], out["mask"]
        if img.shape[:2] != mask.shape:
            raise WireError(
                "dimension_mismatch",
                f"mask {mask.shape} does not match image {img.shape[:2]}",
            )
    return out


def embedding_response(vector) -> dict:
    return {"embedding": [float(v) for v in np.asarray(vector, dtype=np.float64)]}


def feature_map_response(fmap) -> dict:
    arr = np.asarray(fmap, dtype=np.float64)
    return {
        "embedding": [float(v) for v in arr.ravel()],
        "shape": [int(s) for s in arr.shape],
    }


def image_response(image) -> dict:
    return {"image": _b64(image_to_png_bytes(image))}


def error_body(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _finite_array(values, what: str) -> np.ndarray:
    if not isinstance(values, list) or not values:
        raise ProtocolViolation(f"{what} must be a non-empty array")
    try:
        arr = np.asarray([float(v) for v in values], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProtocolViolation(f"{what} entries are not numbers: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise ProtocolViolation(f"{what} contains non-finite entries")
    return arr


def decode_response(capability: Capability, payload: dict):
    """Decode a 200 response body; raises ProtocolViolation when malformed."""
    if not isinstance(payload, dict):
        raise ProtocolViolation("response body must be a JSON object")
    if "error" in payload:
        err = payload.get("error") or {}
        raise ProtocolViolation(f"backend error {err.get('code')}: {err.get('message')}")
    if capability is Capability.FEATURE_MAP:
        flat = _finite_array(payload.get("embedding"), "feature map")
        shape = payload.get("shape")
        if (
            not isinstance(shape, list)
            or len(shape) != 3
            or not all(isinstance(s, int) and s > 0 for s in shape)
        ):
            raise ProtocolViolation(f"feature map reply needs a positive [C, H, W] shape, got {shape!r}")
        if math.prod(shape) != flat.size:
            raise ProtocolViolation(f"feature map shape {shape} does not match {flat.size} values")
        return flat.reshape(shape)
    if capability in (Capability.ENCODE, Capability.PROMPT_ENCODE):
        return _finite_array(payload.get("embedding"), "embedding")
    if "image" not in payload:
        raise ProtocolViolation("image reply is missing the 'image' field")
    try:
        data = base64.b64decode(payload["image"], validate=True)
        return image_from_png_bytes(data)
    except Exception as exc:
        raise ProtocolViolation(f"image reply does not decode: {exc}") from exc
