"""PNG image and mask persistence.

Everything the pipeline writes is PNG: lossless storage is what keeps the
bit-exact composition invariants alive across process boundaries. Writes go
through a temp file and an atomic rename so concurrent runs into different
directories never see half-written files.
"""

import io
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, IoError
from .geometry import as_image, as_mask

__all__ = [
    "load_image",
    "save_png",
    "image_to_png_bytes",
    "image_from_png_bytes",
    "mask_to_png_bytes",
    "mask_from_png_bytes",
    "atomic_write_bytes",
]


def load_image(path) -> np.ndarray:
    """Read any Pillow-supported image as an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path!r} is not a decodable image: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read image {path!r}: {exc}") from exc


def image_to_png_bytes(image) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(as_image(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"payload is not a decodable PNG: {exc}") from exc


def mask_to_png_bytes(mask) -> bytes:
    """Encode a {0,1} mask as a single-channel PNG with values {0, 255}."""
    buf = io.BytesIO()
    Image.fromarray(as_mask(mask) * np.uint8(255), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png_bytes(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            gray = np.asarray(im.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"payload is not a decodable PNG mask: {exc}") from exc
    bad = ~np.isin(gray, (0, 255))
    if bad.any():
        raise FormatError("mask PNG must contain only values 0 and 255")
    return (gray == 255).astype(np.uint8)


def atomic_write_bytes(data: bytes, path) -> None:
    """Write via temp file + rename so readers never observe partial files."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoError(f"cannot write {path!r}: {exc}") from exc


def save_png(image, path) -> None:
    """Encode an RGB image to PNG and write it atomically."""
    atomic_write_bytes(image_to_png_bytes(image), path)
