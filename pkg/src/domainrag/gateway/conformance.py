"""Wire-protocol conformance suite.

The repo ships a set of golden request cases (conformance/cases.json); any
backend implementation — the in-process fakes here or a separately deployed
sidecar — must answer them correctly. Because concrete model outputs differ
between backends, expectations constrain protocol-level facts (status,
body kind, dimensions, error codes, determinism), not pixel values.

Request templates may contain {"$random": {"dim_key": ..., "seed": ...,
"offset": ...}} in place of a prompt array; the runner expands it to a
deterministic array sized from the backend's declared dimensions, so the
same golden file exercises backends of any embedding width.
"""

import base64
import io
import json

import numpy as np
from PIL import Image

from ..errors import DomainRagError, ProtocolViolation
from ..imageio import image_to_png_bytes
from . import wire
from .types import ROUTE_TO_CAPABILITY, Capability

__all__ = [
    "LocalBackendHandler",
    "HttpHandler",
    "ConformanceReport",
    "run_conformance",
    "build_cases",
    "write_cases",
    "load_cases",
]


def _test_image(height: int, width: int, key: int) -> np.ndarray:
    iy = np.arange(height)[:, None]
    ix = np.arange(width)[None, :]
    r = (ix * 3 + iy * 5 + key * 17) % 256
    g = (ix * 7 + iy * 2 + key * 29) % 256
    b = (ix + iy * 11 + key * 43) % 256
    return np.stack([r, g, b], axis=2).astype(np.uint8)


def _b64_image(height: int, width: int, key: int) -> str:
    return base64.b64encode(image_to_png_bytes(_test_image(height, width, key))).decode("ascii")


def _b64_mask(height: int, width: int, zero_box=None, gray=False) -> str:
    arr = np.full((height, width), 255, dtype=np.uint8)
    if zero_box is not None:
        x, y, w, h = zero_box
        arr[y : y + h, x : x + w] = 0
    if gray:
        arr[0, 0] = 128  # deliberately outside the {0, 255} alphabet
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class LocalBackendHandler:
    """Serve the wire protocol from an in-process backend suite.

    This is the reference request/response semantics: decode, dispatch,
    encode, and map failures to {"error": {...}} bodies with 4xx/5xx codes.
    """

    def __init__(self, suite):
        self.suite = suite

    def __call__(self, route: str, payload: dict):
        cap = ROUTE_TO_CAPABILITY.get(route)
        if cap is None:
            return 404, wire.error_body("unknown_route", f"no such route: {route}")
        try:
            kwargs = wire.decode_request(cap, payload)
        except wire.WireError as exc:
            return exc.status, exc.body()
        try:
            if cap is Capability.ENCODE:
                return 200, wire.embedding_response(self.suite.encode(kwargs["image"]))
            if cap is Capability.FEATURE_MAP:
                return 200, wire.feature_map_response(self.suite.feature_map(kwargs["image"]))
            if cap is Capability.INPAINT:
                return 200, wire.image_response(self.suite.inpaint(kwargs["image"], kwargs["mask"]))
            if cap is Capability.PROMPT_ENCODE:
                return 200, wire.embedding_response(self.suite.prompt_encode(kwargs["image"]))
            if cap is Capability.GENERATE:
                return 200, wire.image_response(self.suite.generate(kwargs["prompt"], kwargs["params"]))
            return 200, wire.image_response(
                self.suite.fill(kwargs["image"], kwargs["mask"], kwargs["prompt"], kwargs["params"])
            )
        except ProtocolViolation as exc:
            return 400, wire.error_body("dimension_mismatch", str(exc))
        except DomainRagError as exc:
            return 400, wire.error_body("bad_request", str(exc))
        except Exception as exc:  # backend fault
            return 500, wire.error_body("internal", str(exc))


class HttpHandler:
    """Adapter that runs conformance cases against a live HTTP service."""

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.session = requests.Session()

    def __call__(self, route: str, payload: dict):
        resp = self.session.post(self.base_url + route, json=payload, timeout=self.timeout_s)
        try:
            body = resp.json()
        except ValueError:
            body = {}
        return resp.status_code, body


class ConformanceReport:
    def __init__(self):
        self.results = []  # (name, ok, message)

    def add(self, name: str, ok: bool, message: str = ""):
        self.results.append((name, ok, message))

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    @property
    def failures(self):
        return [(n, m) for n, ok, m in self.results if not ok]

    def summary(self) -> str:
        lines = [f"{'PASS' if ok else 'FAIL'}  {name}{': ' + msg if msg else ''}"
                 for name, ok, msg in self.results]
        n_ok = sum(ok for _, ok, _ in self.results)
        lines.append(f"{n_ok}/{len(self.results)} conformance cases passed")
        return "\n".join(lines)


def _expand_request(request: dict, declared: dict) -> dict:
    out = {}
    for key, value in request.items():
        if isinstance(value, dict) and "$random" in value:
            spec = value["$random"]
            dim = declared.get(spec.get("dim_key", "prompt_dim"))
            if dim is None:
                raise ValueError(f"case needs declared dim {spec.get('dim_key')!r} to expand a prompt")
            size = int(dim) + int(spec.get("offset", 0))
            rng = np.random.default_rng(int(spec.get("seed", 0)))
            out[key] = [float(v) for v in rng.uniform(-1.0, 1.0, size=size)]
        else:
            out[key] = value
    return out


def _png_dims(b64_payload: str):
    with Image.open(io.BytesIO(base64.b64decode(b64_payload))) as im:
        return im.width, im.height


def _check_case(case: dict, statuses, bodies, request: dict, declared: dict,
                generation_deterministic: bool) -> str:
    expect = case["expect"]
    status, body = statuses[0], bodies[0]
    if status != expect["status"]:
        return f"expected HTTP {expect['status']}, got {status} ({json.dumps(body)[:120]})"
    kind = expect["kind"]
    if kind == "error":
        err = body.get("error")
        if not isinstance(err, dict) or "code" not in err or "message" not in err:
            return f"error body must carry code and message, got {json.dumps(body)[:120]}"
        want = expect.get("error_code")
        if want and err["code"] != want:
            return f"expected error code {want!r}, got {err['code']!r}"
    elif kind in ("embedding", "feature_map"):
        emb = body.get("embedding")
        if not isinstance(emb, list) or not emb:
            return "reply lacks a non-empty 'embedding' array"
        if not all(isinstance(v, (int, float)) and np.isfinite(v) for v in emb):
            return "embedding contains non-numeric or non-finite entries"
        if kind == "embedding":
            want_dim = declared.get(expect.get("dim_key", ""), None)
            if want_dim is not None and len(emb) != want_dim:
                return f"embedding length {len(emb)} != declared {want_dim}"
        else:
            shape = body.get("shape")
            if (not isinstance(shape, list) or len(shape) != 3
                    or not all(isinstance(s, int) and s > 0 for s in shape)):
                return f"feature map reply needs a positive [C, H, W] shape, got {shape!r}"
            if shape[0] * shape[1] * shape[2] != len(emb):
                return f"shape {shape} inconsistent with {len(emb)} values"
            want_c = declared.get("feature_channels")
            if want_c is not None and shape[0] != want_c:
                return f"feature channels {shape[0]} != declared {want_c}"
    elif kind == "image":
        if "image" not in body:
            return "reply lacks the 'image' field"
        try:
            width, height = _png_dims(body["image"])
        except Exception as exc:
            return f"reply image does not decode as PNG: {exc}"
        want_w, want_h = expect.get("width"), expect.get("height")
        if want_w == "input" or want_h == "input":
            want_w, want_h = _png_dims(request["image"])
        if want_w is not None and (width, height) != (want_w, want_h):
            return f"expected {want_w}x{want_h}, got {width}x{height}"
    else:
        return f"unknown expectation kind {kind!r}"

    determinism = case.get("determinism")
    must_match = determinism == "always" or (determinism == "declared" and generation_deterministic)
    if must_match and len(bodies) > 1:
        canon = [json.dumps(b, sort_keys=True) for b in bodies]
        if any(c != canon[0] for c in canon[1:]):
            return "repeated identical requests produced different replies"
    return ""


def run_conformance(handler, cases, declared: dict, generation_deterministic: bool = True) -> ConformanceReport:
    """Run every case against `handler(route, payload) -> (status, body)`."""
    report = ConformanceReport()
    for case in cases:
        try:
            request = _expand_request(case["request"], declared)
            repeat = int(case.get("repeat", 1))
            statuses, bodies = [], []
            for _ in range(repeat):
                status, body = handler(case["route"], request)
                statuses.append(status)
                bodies.append(body)
            message = _check_case(case, statuses, bodies, request, declared, generation_deterministic)
        except Exception as exc:
            message = f"runner error: {exc}"
        report.add(case["name"], message == "", message)
    return report


def build_cases() -> list:
    """The golden case set; regenerate the shipped JSON with write_cases."""
    img = _b64_image(48, 64, key=1)
    img_other = _b64_image(48, 64, key=2)
    mask = _b64_mask(48, 64, zero_box=(8, 8, 16, 12))
    mask_all_bg = _b64_mask(48, 64)
    mask_wrong = _b64_mask(32, 32, zero_box=(4, 4, 8, 8))
    mask_gray = _b64_mask(48, 64, zero_box=(8, 8, 16, 12), gray=True)
    params = {"guidance_scale": 2.5, "num_steps": 50, "noise_strength": 0.8, "seed": 1234}
    prompt = {"$random": {"dim_key": "prompt_dim", "seed": 7}}
    bad_dim_prompt = {"$random": {"dim_key": "prompt_dim", "seed": 7, "offset": 1}}

    return [
        {"name": "encode_ok_deterministic", "route": "/v1/encode",
         "request": {"image": img}, "repeat": 2, "determinism": "always",
         "expect": {"status": 200, "kind": "embedding", "dim_key": "encode_dim"}},
        {"name": "encode_missing_image", "route": "/v1/encode", "request": {},
         "expect": {"status": 400, "kind": "error", "error_code": "missing_field"}},
        {"name": "encode_undecodable_image", "route": "/v1/encode",
         "request": {"image": "bm90IGEgcG5n"},
         "expect": {"status": 400, "kind": "error", "error_code": "bad_image"}},
        {"name": "feature_map_ok", "route": "/v1/feature_map",
         "request": {"image": img}, "repeat": 2, "determinism": "always",
         "expect": {"status": 200, "kind": "feature_map"}},
        {"name": "prompt_encode_ok_deterministic", "route": "/v1/prompt_encode",
         "request": {"image": img_other}, "repeat": 2, "determinism": "always",
         "expect": {"status": 200, "kind": "embedding", "dim_key": "prompt_dim"}},
        {"name": "inpaint_ok_same_size", "route": "/v1/inpaint",
         "request": {"image": img, "mask": mask},
         "expect": {"status": 200, "kind": "image", "width": "input", "height": "input"}},
        {"name": "inpaint_noop_mask", "route": "/v1/inpaint",
         "request": {"image": img, "mask": mask_all_bg},
         "expect": {"status": 200, "kind": "image", "width": "input", "height": "input"}},
        {"name": "inpaint_mask_size_mismatch", "route": "/v1/inpaint",
         "request": {"image": img, "mask": mask_wrong},
         "expect": {"status": 400, "kind": "error", "error_code": "dimension_mismatch"}},
        {"name": "inpaint_mask_not_binary", "route": "/v1/inpaint",
         "request": {"image": img, "mask": mask_gray},
         "expect": {"status": 400, "kind": "error", "error_code": "bad_mask"}},
        {"name": "generate_ok_1024", "route": "/v1/generate",
         "request": {"prompt": prompt, "params": params}, "repeat": 2, "determinism": "declared",
         "expect": {"status": 200, "kind": "image", "width": 1024, "height": 1024}},
        {"name": "generate_missing_params", "route": "/v1/generate",
         "request": {"prompt": prompt},
         "expect": {"status": 400, "kind": "error", "error_code": "missing_field"}},
        {"name": "generate_bad_noise_strength", "route": "/v1/generate",
         "request": {"prompt": prompt,
                     "params": {"guidance_scale": 2.5, "num_steps": 50,
                                "noise_strength": 1.5, "seed": 1}},
         "expect": {"status": 400, "kind": "error", "error_code": "bad_params"}},
        {"name": "generate_wrong_prompt_dim", "route": "/v1/generate",
         "request": {"prompt": bad_dim_prompt, "params": params},
         "expect": {"status": 400, "kind": "error", "error_code": "dimension_mismatch"}},
        {"name": "fill_ok_same_size", "route": "/v1/fill",
         "request": {"image": img, "mask": mask, "prompt": prompt, "params": params},
         "repeat": 2, "determinism": "declared",
         "expect": {"status": 200, "kind": "image", "width": "input", "height": "input"}},
        {"name": "fill_mask_size_mismatch", "route": "/v1/fill",
         "request": {"image": img, "mask": mask_wrong, "prompt": prompt, "params": params},
         "expect": {"status": 400, "kind": "error", "error_code": "dimension_mismatch"}},
        {"name": "unknown_route_rejected", "route": "/v1/does_not_exist",
         "request": {"image": img},
         "expect": {"status": 404, "kind": "error"}},
    ]


def write_cases(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"version": 1, "cases": build_cases()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cases(path) -> list:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("version") != 1 or "cases" not in doc:
        raise ValueError(f"{path!r} is not a version-1 conformance file")
    return doc["cases"]


if __name__ == "__main__":
    import sys

    write_cases(sys.argv[1] if len(sys.argv) > 1 else "conformance/cases.json")
