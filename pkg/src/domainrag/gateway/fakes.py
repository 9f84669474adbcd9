"""Deterministic in-process stand-ins for the six model backends.

Every fake is a pure function of (inputs, suite seed): embeddings come from
a seeded SHA-256 of the pixel bytes expanded to the declared dimension and
L2-normalized, images from procedurally generated textures keyed by the
same hash. Distinct inputs therefore get distinct outputs, repeated calls
are byte-identical, and no model weights are involved — which is what lets
the whole pipeline run and be tested offline.
"""

import hashlib
import struct

import numpy as np

from ..errors import ProtocolViolation
from ..geometry import as_image, as_mask
from .types import GENERATED_SIZE, GenerationParams

__all__ = ["FakeModelSuite"]

_TWO_PI = 2.0 * np.pi


def _expand(n_floats: int, *parts: bytes) -> np.ndarray:
    """Counter-mode SHA-256 expansion of `parts` into floats in [-1, 1)."""
    base = hashlib.sha256(b"\x1f".join(parts)).digest()
    blocks = []
    for counter in range(-(-n_floats * 8 // 32)):  # 32 hash bytes per block
        blocks.append(hashlib.sha256(base + struct.pack("<I", counter)).digest())
    raw = b"".join(blocks)[: n_floats * 8]
    ints = np.frombuffer(raw, dtype="<u8")
    return (ints / np.float64(2**63)) - 1.0


def _seed_ints(*parts: bytes) -> list:
    digest = hashlib.sha256(b"\x1f".join(parts)).digest()
    return list(np.frombuffer(digest, dtype="<u8"))


def _params_bytes(params: GenerationParams) -> bytes:
    return struct.pack(
        "<dIdQ", params.guidance_scale, params.num_steps, params.noise_strength, params.seed
    )


def _image_bytes(image: np.ndarray) -> bytes:
    h, w = image.shape[:2]
    return struct.pack("<II", w, h) + image.tobytes()


def _texture(height: int, width: int, *hash_parts: bytes) -> np.ndarray:
    """Smooth procedural RGB texture, deterministic in the hash parts."""
    rng = np.random.default_rng(_seed_ints(b"texture", *hash_parts))
    yy = np.linspace(0.0, 1.0, height)[:, None]
    xx = np.linspace(0.0, 1.0, width)[None, :]
    out = np.empty((height, width, 3), dtype=np.float64)
    for c in range(3):
        base = rng.uniform(40.0, 215.0)
        f1, f2 = rng.uniform(1.5, 9.0, size=2)
        p1, p2 = rng.uniform(0.0, _TWO_PI, size=2)
        ang = rng.uniform(0.0, np.pi)
        u = np.cos(ang) * xx + np.sin(ang) * yy
        v = np.cos(ang) * yy - np.sin(ang) * xx
        field = np.sin(_TWO_PI * f1 * u + p1) + np.cos(_TWO_PI * f2 * v + p2)
        out[:, :, c] = base + 50.0 * field
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


class FakeModelSuite:
    """All six capabilities as deterministic procedural functions."""

    deterministic = True

    def __init__(self, seed: int = 0, encode_dim: int = 64, prompt_dim: int = 64,
                 feature_channels: int = 8, feature_grid: int = 8):
        self.seed = seed
        self.encode_dim = encode_dim
        self.prompt_dim = prompt_dim
        self.feature_channels = feature_channels
        self.feature_grid = feature_grid
        self._seed_bytes = struct.pack("<Q", seed)
        # Per-channel affine coefficients for the fake feature extractor.
        coefs = _expand(2 * feature_channels, b"feature-coefs", self._seed_bytes)
        self._ch_scale = 0.5 + 0.5 * (coefs[:feature_channels] + 1.0)  # in [0.5, 1.5)
        self._ch_shift = 32.0 * coefs[feature_channels:]

    @property
    def declared(self) -> dict:
        return {
            "encode_dim": self.encode_dim,
            "prompt_dim": self.prompt_dim,
            "feature_channels": self.feature_channels,
            "deterministic": True,
        }

    def _hash_embedding(self, tag: bytes, image: np.ndarray, dim: int) -> np.ndarray:
        vec = _expand(dim, tag, self._seed_bytes, _image_bytes(image))
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # astronomically unlikely; keep the contract anyway
            vec[0] = 1.0
            norm = 1.0
        return vec / norm

    def encode(self, image) -> np.ndarray:
        return self._hash_embedding(b"encode", as_image(image), self.encode_dim)

    def prompt_encode(self, image) -> np.ndarray:
        return self._hash_embedding(b"prompt", as_image(image), self.prompt_dim)

    def feature_map(self, image) -> np.ndarray:
        """Block-mean grayscale grid, one affine copy per declared channel."""
        img = as_image(image)
        h, w = img.shape[:2]
        gray = img.astype(np.float64).mean(axis=2)
        gh, gw = min(self.feature_grid, h), min(self.feature_grid, w)
        ys = (np.arange(gh + 1) * h) // gh
        xs = (np.arange(gw + 1) * w) // gw
        integral = np.zeros((h + 1, w + 1), dtype=np.float64)
        integral[1:, 1:] = gray.cumsum(axis=0).cumsum(axis=1)
        sums = (
            integral[ys[1:, None], xs[None, 1:]]
            - integral[ys[:-1, None], xs[None, 1:]]
            - integral[ys[1:, None], xs[None, :-1]]
            + integral[ys[:-1, None], xs[None, :-1]]
        )
        areas = (ys[1:, None] - ys[:-1, None]) * (xs[None, 1:] - xs[None, :-1])
        cells = sums / areas
        return self._ch_scale[:, None, None] * cells[None, :, :] + self._ch_shift[:, None, None]

    def inpaint(self, image, mask) -> np.ndarray:
        """Fill the foreground (mask==0) with the mean background color."""
        img = as_image(image)
        m = as_mask(mask)
        if img.shape[:2] != m.shape:
            raise ProtocolViolation(f"mask {m.shape} does not match image {img.shape[:2]}")
        fg = m == 0
        if not fg.any():
            return img.copy()
        bg = ~fg
        region = img[bg] if bg.any() else img.reshape(-1, 3)
        fill = np.floor(region.astype(np.float64).mean(axis=0) + 0.5).astype(np.uint8)
        out = img.copy()
        out[fg] = fill
        return out

    def _check_prompt(self, prompt) -> np.ndarray:
        arr = np.asarray(prompt, dtype=np.float64)
        if arr.ndim != 1 or arr.size != self.prompt_dim:
            raise ProtocolViolation(
                f"prompt has dimension {arr.shape}, backend declares {self.prompt_dim}"
            )
        return arr

    def generate(self, prompt, params: GenerationParams) -> np.ndarray:
        arr = self._check_prompt(prompt)
        return _texture(
            GENERATED_SIZE,
            GENERATED_SIZE,
            b"generate",
            self._seed_bytes,
            arr.astype("<f8").tobytes(),
            _params_bytes(params),
        )

    def fill(self, image, mask, prompt, params: GenerationParams) -> np.ndarray:
        """Repaint mask==1 pixels from a prompt-keyed palette; keep the rest."""
        img = as_image(image)
        m = as_mask(mask)
        if img.shape[:2] != m.shape:
            raise ProtocolViolation(f"mask {m.shape} does not match image {img.shape[:2]}")
        arr = self._check_prompt(prompt)
        paint = _texture(
            img.shape[0],
            img.shape[1],
            b"fill",
            self._seed_bytes,
            arr.astype("<f8").tobytes(),
            _params_bytes(params),
        )
        out = img.copy()
        repaint = m == 1
        out[repaint] = paint[repaint]
        return out
