"""Model adapters behind the six capabilities.

Adapter ids are configuration: the torch-backed ones bind real CNN
architectures (seeded deterministic initialization, so no checkpoint
download is needed at desk scale; pretrained weights are a deployment
concern, not a protocol one), `opencv-telea` is a classical inpainting
algorithm, and the procedural generators are deterministic stand-ins for
diffusion backends that declare their determinism.
"""

import hashlib
import struct

import numpy as np
from PIL import Image

GENERATED_SIZE = 1024


class AdapterLoadError(Exception):
    """A model failed to load; the service aborts startup with this."""


def _seed_ints(*parts: bytes):
    digest = hashlib.sha256(b"\x1f".join(parts)).digest()
    return list(np.frombuffer(digest, dtype="<u8"))


def _params_bytes(params) -> bytes:
    return struct.pack(
        "<dIdQ", params.guidance_scale, params.num_steps, params.noise_strength, params.seed
    )


def _texture(height: int, width: int, *hash_parts: bytes) -> np.ndarray:
    """Layered low-frequency noise upscaled bicubically. Deterministic."""
    rng = np.random.default_rng(_seed_ints(b"texture", *hash_parts))
    layers = []
    for grid, weight in ((12, 0.65), (48, 0.35)):
        low = rng.uniform(0.0, 255.0, size=(grid, grid, 3))
        im = Image.fromarray(low.astype(np.uint8), mode="RGB").resize(
            (width, height), Image.BICUBIC
        )
        layers.append(weight * np.asarray(im, dtype=np.float64))
    out = layers[0] + layers[1]
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# -- encoders ----------------------------------------------------------------


class StatsEncoder:
    """Pure-numpy image encoder: pooled block statistics, random-projected."""

    deterministic = True

    def __init__(self, dim: int, seed: int):
        self.dim = dim
        rng = np.random.default_rng(_seed_ints(b"stats-proj", struct.pack("<QI", seed, dim)))
        # 4x4 block means x 3 channels + global mean/std per channel = 54 raw features
        self._proj = rng.normal(size=(54, dim)) / np.sqrt(54.0)

    def _raw_features(self, image: np.ndarray) -> np.ndarray:
        img = image.astype(np.float64)
        h, w = img.shape[:2]
        ys = (np.arange(5) * h) // 4
        xs = (np.arange(5) * w) // 4
        feats = []
        for c in range(3):
            chan = img[:, :, c]
            feats.extend([chan.mean(), chan.std()])
            for i in range(4):
                for j in range(4):
                    block = chan[ys[i]: max(ys[i + 1], ys[i] + 1), xs[j]: max(xs[j + 1], xs[j] + 1)]
                    feats.append(block.mean())
        return np.asarray(feats) / 255.0

    def __call__(self, image: np.ndarray) -> np.ndarray:
        vec = self._raw_features(image) @ self._proj
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


class TorchResnetEncoder:
    """ResNet-18 backbone (seeded init), pooled and projected to `dim`."""

    deterministic = True

    def __init__(self, dim: int, seed: int):
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise AdapterLoadError(f"torch/torchvision unavailable: {exc}") from exc
        self.dim = dim
        self._torch = torch
        torch.set_num_threads(1)
        torch.manual_seed(seed)
        model = torchvision.models.resnet18(weights=None)
        model.fc = torch.nn.Identity()
        self._model = model.eval()
        rng = np.random.default_rng(_seed_ints(b"resnet-proj", struct.pack("<QI", seed, dim)))
        self._proj = rng.normal(size=(512, dim)) / np.sqrt(512.0)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        x = torch.from_numpy(np.array(image, copy=True)).float().permute(2, 0, 1) / 255.0
        x = (x - 0.5) / 0.5
        with torch.no_grad():
            pooled = self._model(x.unsqueeze(0))[0].numpy().astype(np.float64)
        vec = pooled @ self._proj
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


# -- shallow feature extractors ----------------------------------------------


class GridFeatures:
    """Pure-numpy fallback: grayscale block means, one affine per channel."""

    deterministic = True

    def __init__(self, channels: int, seed: int, grid: int = 8):
        self.channels = channels
        self.grid = grid
        rng = np.random.default_rng(_seed_ints(b"grid-coefs", struct.pack("<QI", seed, channels)))
        self._scale = rng.uniform(0.5, 1.5, size=channels)
        self._shift = rng.uniform(-32.0, 32.0, size=channels)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        gray = image.astype(np.float64).mean(axis=2)
        h, w = gray.shape
        gh, gw = min(self.grid, h), min(self.grid, w)
        ys = (np.arange(gh + 1) * h) // gh
        xs = (np.arange(gw + 1) * w) // gw
        cells = np.empty((gh, gw))
        for i in range(gh):
            for j in range(gw):
                cells[i, j] = gray[ys[i]: ys[i + 1], xs[j]: xs[j + 1]].mean()
        return self._scale[:, None, None] * cells[None] + self._shift[:, None, None]


class TorchResnet50Shallow:
    """First four layers of a ResNet-50 (stem + stage 1): 256-channel maps."""

    deterministic = True
    channels = 256

    def __init__(self, seed: int):
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise AdapterLoadError(f"torch/torchvision unavailable: {exc}") from exc
        self._torch = torch
        torch.set_num_threads(1)
        torch.manual_seed(seed)
        model = torchvision.models.resnet50(weights=None)
        self._stem = torch.nn.Sequential(
            model.conv1, model.bn1, model.relu, model.maxpool, model.layer1
        ).eval()

    def __call__(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        x = torch.from_numpy(np.array(image, copy=True)).float().permute(2, 0, 1) / 255.0
        x = (x - 0.5) / 0.5
        with torch.no_grad():
            fmap = self._stem(x.unsqueeze(0))[0].numpy().astype(np.float64)
        return fmap


# -- inpainters ---------------------------------------------------------------


class MeanInpainter:
    """Fill the erase region (mask==0) with the mean of the kept region."""

    deterministic = True

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        erase = mask == 0
        out = image.copy()
        if not erase.any():
            return out
        keep = ~erase
        region = image[keep] if keep.any() else image.reshape(-1, 3)
        out[erase] = np.floor(region.astype(np.float64).mean(axis=0) + 0.5).astype(np.uint8)
        return out


class TeleaInpainter:
    """Classical fast-marching inpainting (OpenCV), erase region = mask==0."""

    deterministic = True

    def __init__(self, radius: int = 3):
        try:
            import cv2
        except ImportError as exc:
            raise AdapterLoadError(f"opencv unavailable: {exc}") from exc
        self._cv2 = cv2
        self.radius = radius

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        erase = (mask == 0).astype(np.uint8) * 255
        if not erase.any():
            return image.copy()
        return self._cv2.inpaint(
            np.ascontiguousarray(image), erase, self.radius, self._cv2.INPAINT_TELEA
        )


# -- generators ----------------------------------------------------------------


class ProceduralGenerator:
    """Deterministic 1024x1024 background synthesis keyed by (prompt, params)."""

    deterministic = True
    size = GENERATED_SIZE

    def __init__(self, seed: int):
        self._seed_bytes = struct.pack("<Q", seed)

    def __call__(self, prompt: np.ndarray, params) -> np.ndarray:
        return _texture(
            self.size, self.size, b"generate", self._seed_bytes,
            np.asarray(prompt, dtype="<f8").tobytes(), _params_bytes(params),
        )


class ProceduralFiller:
    """Repaint mask==1 by blending a prompt-keyed texture at noise_strength."""

    deterministic = True

    def __init__(self, seed: int):
        self._seed_bytes = struct.pack("<Q", seed)

    def __call__(self, image: np.ndarray, mask: np.ndarray, prompt: np.ndarray, params) -> np.ndarray:
        h, w = image.shape[:2]
        paint = _texture(
            h, w, b"fill", self._seed_bytes,
            np.asarray(prompt, dtype="<f8").tobytes(), _params_bytes(params),
        )
        ns = params.noise_strength
        blended = np.floor(
            (1.0 - ns) * image.astype(np.float64) + ns * paint.astype(np.float64) + 0.5
        ).astype(np.uint8)
        out = image.copy()
        repaint = mask == 1
        out[repaint] = blended[repaint]
        return out


# -- registry -------------------------------------------------------------------


def build_adapter(capability: str, model_id: str, config):
    """Instantiate the adapter `model_id` for `capability`."""
    try:
        if capability == "encode":
            if model_id == "torch-resnet18-encoder":
                return TorchResnetEncoder(dim=config.encode_dim, seed=config.seed)
            if model_id == "numpy-stats-encoder":
                return StatsEncoder(dim=config.encode_dim, seed=config.seed)
        elif capability == "prompt_encode":
            if model_id == "torch-resnet18-prompt":
                return TorchResnetEncoder(dim=config.prompt_dim, seed=config.seed + 101)
            if model_id == "numpy-stats-prompt":
                return StatsEncoder(dim=config.prompt_dim, seed=config.seed + 101)
        elif capability == "feature_map":
            if model_id == "torch-resnet50-shallow":
                return TorchResnet50Shallow(seed=config.seed + 7)
            if model_id == "numpy-grid-features":
                return GridFeatures(channels=config.feature_channels, seed=config.seed + 7)
        elif capability == "inpaint":
            if model_id == "opencv-telea":
                return TeleaInpainter()
            if model_id == "numpy-mean-inpaint":
                return MeanInpainter()
        elif capability == "generate":
            if model_id == "procedural-diffusion":
                return ProceduralGenerator(seed=config.seed + 13)
        elif capability == "fill":
            if model_id == "procedural-fill":
                return ProceduralFiller(seed=config.seed + 17)
    except AdapterLoadError:
        raise
    except Exception as exc:
        raise AdapterLoadError(f"{capability}: loading {model_id!r} failed: {exc}") from exc
    raise AdapterLoadError(f"{capability}: unknown model id {model_id!r}")
