"""NumPy implementations of the hot kernels.

These are the reference semantics; the Cython module in _ckernels.pyx mirrors
them operation-for-operation. Integer-valued outputs (resizes, compose) are
bit-identical between the two backends because both evaluate the same
float64 expressions in the same association order. Reductions (scores,
distances, channel stats) may differ in the last ulp since NumPy uses
pairwise summation.

All kernels assume validated inputs; contract checks live in the callers.
"""

import numpy as np


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine similarity of each row of `matrix` against `query`, in [-1, 1].

    Rows and the query must have nonzero norm (validated upstream).
    """
    dots = matrix @ query
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    qnorm = float(np.sqrt(query @ query))
    return np.clip(dots / (norms * qnorm), -1.0, 1.0)


def l2_distances(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of `matrix` to `vector`."""
    diff = matrix - vector
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def channel_stats(fmap: np.ndarray) -> np.ndarray:
    """Spatial mean and population std per channel of a (C, H, W) map.

    Returns a (2C,) vector: means first, then stds (divide-by-HW convention,
    computed two-pass to avoid cancellation).
    """
    c = fmap.shape[0]
    flat = fmap.reshape(c, -1)
    means = flat.mean(axis=1)
    centered = flat - means[:, None]
    stds = np.sqrt(np.einsum("ij,ij->i", centered, centered) / flat.shape[1])
    return np.concatenate([means, stds])


def _src_grid(out_size: int, in_size: int, num: int, den: int) -> np.ndarray:
    # Origin-aligned sampling: dst index j reads src coordinate j*den/num.
    # Output pixel j*num/den of an exact-factor resize lands back on source
    # pixel j, which is what makes integer up/down round trips lossless.
    coords = (np.arange(out_size, dtype=np.float64) * den) / num
    return np.minimum(coords, float(in_size - 1))


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int, num: int, den: int) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) uint8 image by the rational num/den."""
    in_h, in_w = image.shape[:2]
    sy = _src_grid(out_h, in_h, num, den)
    sx = _src_grid(out_w, in_w, num, den)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (sy - y0)[:, None, None]
    wx = (sx - x0)[None, :, None]

    img = image.astype(np.float64)
    p00 = img[y0[:, None], x0[None, :]]
    p01 = img[y0[:, None], x1[None, :]]
    p10 = img[y1[:, None], x0[None, :]]
    p11 = img[y1[:, None], x1[None, :]]

    top = p00 + wx * (p01 - p00)
    bot = p10 + wx * (p11 - p10)
    val = top + wy * (bot - top)
    return np.floor(val + 0.5).astype(np.uint8)


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int, num: int, den: int) -> np.ndarray:
    """Nearest-neighbor resize of an (H, W) uint8 mask by num/den.

    Source index is the integer floor (j*den)//num, so values never mix:
    the output alphabet is a subset of the input alphabet.
    """
    in_h, in_w = mask.shape
    ys = np.minimum((np.arange(out_h, dtype=np.int64) * den) // num, in_h - 1)
    xs = np.minimum((np.arange(out_w, dtype=np.int64) * den) // num, in_w - 1)
    return mask[ys[:, None], xs[None, :]]


def compose_pixels(original: np.ndarray, mask: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Pixelwise select: original where mask==0, filled where mask==1."""
    keep = (mask == 0)[:, :, None]
    return np.where(keep, original, filled)
