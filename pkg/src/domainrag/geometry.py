"""Masks, resampling, box transforms, and foreground-preserving composition.

Conventions, used everywhere:
  * images are (H, W, 3) uint8 arrays, origin top-left;
  * boxes are integer (x, y, w, h) covering the half-open pixel range
    [x, x+w) x [y, y+h), matching COCO semantics;
  * masks are (H, W) uint8 with 0 inside foreground boxes (preserved) and
    1 elsewhere (free to repaint).

Resampling is aspect-preserving by a positive rational factor. Sampling is
origin-aligned (destination pixel j reads source coordinate j/factor), so
upsampling by an integer factor followed by downsampling by its reciprocal
returns the original pixels exactly on the lattice points. Bilinear for
images, nearest-neighbor for masks so they stay binary.
"""

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, GeometryError

__all__ = [
    "BoundingBox",
    "ResampleDirection",
    "ResamplePolicy",
    "ResamplePlan",
    "as_image",
    "as_mask",
    "build_mask",
    "needs_upsample",
    "plan_resample",
    "inverse_plan",
    "apply_resample",
    "apply_resample_mask",
    "transform_bbox",
    "inverse_transform_bbox",
    "compose",
]

# Thresholds for the three resample policies (pixels).
SMALL_IMAGE_EDGE = 1024
LONG_SIDE_TARGET = 2048
MAX_EDGE = 2800


@dataclass(frozen=True)
class BoundingBox:
    """Integer pixel box: top-left corner (x, y), positive size (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y), ("w", self.w), ("h", self.h)):
            if not isinstance(v, int) or isinstance(v, bool):
                raise GeometryError(f"box {name} must be an integer, got {v!r}")
        if self.x < 0 or self.y < 0:
            raise GeometryError(f"box origin must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise GeometryError(f"box size must be positive, got ({self.w}, {self.h})")

    def validate_within(self, width: int, height: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise GeometryError(
                f"box ({self.x}, {self.y}, {self.w}, {self.h}) exceeds image {width}x{height}"
            )

    @property
    def area(self) -> int:
        return self.w * self.h


class ResampleDirection(enum.Enum):
    NONE = "none"
    UPSAMPLE = "upsample"
    DOWNSAMPLE = "downsample"


class ResamplePolicy(enum.Enum):
    """Named resample presets.

    NONE: never resample.
    DOUBLE_BELOW_1024: double any image unless both sides already exceed
      1024 px (small inputs lose fine structure in VAE-based fillers).
    LONGEST_SIDE_2048: repeatedly double until the longer side exceeds
      2048 px (for datasets with tiny boxes).
    INTEGER_EDGE_2800: divide by the smallest integer that brings both
      edges to at most 2800 px (for datasets with huge frames).
    """

    NONE = "none"
    DOUBLE_BELOW_1024 = "double_below_1024"
    LONGEST_SIDE_2048 = "longest_side_2048"
    INTEGER_EDGE_2800 = "integer_edge_2800"


@dataclass(frozen=True)
class ResamplePlan:
    direction: ResampleDirection
    factor: Fraction
    policy: ResamplePolicy

    def __post_init__(self):
        f = Fraction(self.factor)
        object.__setattr__(self, "factor", f)
        if f <= 0:
            raise GeometryError(f"resample factor must be positive, got {f}")
        if (self.direction is ResampleDirection.NONE) != (f == 1):
            raise GeometryError(f"direction {self.direction.value} inconsistent with factor {f}")
        if self.direction is ResampleDirection.UPSAMPLE and f <= 1:
            raise GeometryError(f"upsample factor must exceed 1, got {f}")
        if self.direction is ResampleDirection.DOWNSAMPLE and f >= 1:
            raise GeometryError(f"downsample factor must be below 1, got {f}")
        if self.policy is ResamplePolicy.INTEGER_EDGE_2800 and 1 not in (f.numerator, f.denominator):
            raise GeometryError(f"integer-edge plans need an integer or 1/integer factor, got {f}")

    @property
    def is_identity(self) -> bool:
        return self.direction is ResampleDirection.NONE


def _identity(policy: ResamplePolicy) -> ResamplePlan:
    return ResamplePlan(ResampleDirection.NONE, Fraction(1), policy)


def as_image(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"image must be (H, W, 3), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise DimensionError(f"image must be uint8, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise GeometryError(f"image has an empty axis: shape {arr.shape}")
    return arr


def as_mask(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise DimensionError(f"mask must be (H, W), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise DimensionError(f"mask must be uint8, got {arr.dtype}")
    if not np.isin(arr, (0, 1)).all():
        raise DimensionError("mask values must be 0 or 1")
    return arr


def build_mask(width: int, height: int, boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Binary mask that is 0 inside the union of the boxes, 1 elsewhere.

    Every ground-truth box is zeroed so no foreground object is ever
    handed to the repainting stage; an empty box list means the whole
    frame may be repainted.
    """
    if width < 1 or height < 1:
        raise GeometryError(f"mask dimensions must be positive, got {width}x{height}")
    mask = np.ones((height, width), dtype=np.uint8)
    for box in boxes:
        box.validate_within(width, height)
        mask[box.y : box.y + box.h, box.x : box.x + box.w] = 0
    return mask


def _needs_upsample_wh(width: int, height: int) -> int:
    return 0 if (width > SMALL_IMAGE_EDGE and height > SMALL_IMAGE_EDGE) else 1


def needs_upsample(image) -> int:
    """1 if the image should be upsampled before masked filling, else 0.

    Only images strictly larger than 1024 px in BOTH dimensions are left
    alone; everything else gets the indicator.
    """
    img = as_image(image)
    return _needs_upsample_wh(img.shape[1], img.shape[0])


def plan_resample(image, policy: ResamplePolicy) -> ResamplePlan:
    """Decide the aspect-preserving factor the policy dictates for this image."""
    img = as_image(image)
    h, w = img.shape[:2]
    if policy is ResamplePolicy.NONE:
        return _identity(policy)
    if policy is ResamplePolicy.DOUBLE_BELOW_1024:
        if _needs_upsample_wh(w, h):
            return ResamplePlan(ResampleDirection.UPSAMPLE, Fraction(2), policy)
        return _identity(policy)
    if policy is ResamplePolicy.LONGEST_SIDE_2048:
        longer = max(w, h)
        if longer > LONG_SIDE_TARGET:
            return _identity(policy)
        factor = 2
        while longer * factor <= LONG_SIDE_TARGET:
            factor *= 2
        return ResamplePlan(ResampleDirection.UPSAMPLE, Fraction(factor), policy)
    if policy is ResamplePolicy.INTEGER_EDGE_2800:
        longer = max(w, h)
        if longer <= MAX_EDGE:
            return _identity(policy)
        divisor = -(-longer // MAX_EDGE)  # smallest k with longer/k <= 2800
        return ResamplePlan(ResampleDirection.DOWNSAMPLE, Fraction(1, divisor), policy)
    raise GeometryError(f"unknown resample policy {policy!r}")


_INVERSE_DIRECTION = {
    ResampleDirection.NONE: ResampleDirection.NONE,
    ResampleDirection.UPSAMPLE: ResampleDirection.DOWNSAMPLE,
    ResampleDirection.DOWNSAMPLE: ResampleDirection.UPSAMPLE,
}


def inverse_plan(plan: ResamplePlan) -> ResamplePlan:
    """The plan that undoes `plan`: reciprocal factor, opposite direction."""
    if plan.is_identity:
        return plan
    return ResamplePlan(_INVERSE_DIRECTION[plan.direction], 1 / plan.factor, plan.policy)


def _round_half_up(value: Fraction) -> int:
    return (2 * value.numerator + value.denominator) // (2 * value.denominator)


def _scaled_size(size: int, factor: Fraction) -> int:
    return _round_half_up(size * factor)


def apply_resample(image, plan: ResamplePlan) -> np.ndarray:
    """Bilinear resize by the plan's factor; identity plans return the input."""
    img = as_image(image)
    if plan.is_identity:
        return img
    h, w = img.shape[:2]
    out_h = _scaled_size(h, plan.factor)
    out_w = _scaled_size(w, plan.factor)
    if out_h < 1 or out_w < 1:
        raise GeometryError(f"resample of {w}x{h} by {plan.factor} collapses to {out_w}x{out_h}")
    return kernels.resize_bilinear(
        np.ascontiguousarray(img), out_h, out_w, plan.factor.numerator, plan.factor.denominator
    )


def apply_resample_mask(mask, plan: ResamplePlan) -> np.ndarray:
    """Nearest-neighbor resize of a binary mask; the output stays binary."""
    m = as_mask(mask)
    if plan.is_identity:
        return m
    h, w = m.shape
    out_h = _scaled_size(h, plan.factor)
    out_w = _scaled_size(w, plan.factor)
    if out_h < 1 or out_w < 1:
        raise GeometryError(f"resample of {w}x{h} by {plan.factor} collapses to {out_w}x{out_h}")
    return kernels.resize_nearest(
        np.ascontiguousarray(m), out_h, out_w, plan.factor.numerator, plan.factor.denominator
    )


def transform_bbox(box: BoundingBox, plan: ResamplePlan) -> BoundingBox:
    """Scale a box into the plan's output coordinates (sizes floored at 1)."""
    if plan.is_identity:
        return box
    f = plan.factor
    return BoundingBox(
        x=_round_half_up(box.x * f),
        y=_round_half_up(box.y * f),
        w=max(1, _round_half_up(box.w * f)),
        h=max(1, _round_half_up(box.h * f)),
    )


def inverse_transform_bbox(box: BoundingBox, plan: ResamplePlan) -> BoundingBox:
    """Map a box back from the plan's output coordinates (within +/-1 px)."""
    return transform_bbox(box, inverse_plan(plan))


def compose(original, mask, filled) -> np.ndarray:
    """Final assembly: mask==0 pixels come from `original`, the rest from `filled`.

    The copy is unconditional, so foreground fidelity holds no matter what
    the filling backend painted inside the boxes.
    """
    img = as_image(original)
    m = as_mask(mask)
    fil = as_image(filled)
    if img.shape != fil.shape or img.shape[:2] != m.shape:
        raise DimensionError(
            f"compose needs matching shapes, got image {img.shape}, mask {m.shape}, filled {fil.shape}"
        )
    return kernels.compose_pixels(
        np.ascontiguousarray(img), np.ascontiguousarray(m), np.ascontiguousarray(fil)
    )
