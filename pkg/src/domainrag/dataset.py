"""COCO-schema dataset ingestion/emission, episode sampling, and expansion.

The COCO subset handled here is the detection triple:
    images[{id, file_name, width, height}]
    annotations[{id, image_id, category_id, bbox: [x, y, w, h]}]
    categories[{id, name}]

Float boxes are canonicalized on load (floor the origin, ceil the extent)
so they never shrink a foreground region, then validated against their
image. Loading is strict: dangling references and out-of-bounds boxes are
errors, not warnings — bad annotations poison everything downstream.
"""

import json
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    AccountingError,
    DuplicateIdError,
    FormatError,
    GeometryError,
    InsufficientDataError,
    IoError,
    ValidationError,
)
from .gateway.types import GenerationParams
from .geometry import BoundingBox

__all__ = [
    "ImageInfo",
    "Annotation",
    "Category",
    "DetectionDataset",
    "EpisodeSpec",
    "LabeledBox",
    "SupportSample",
    "SupportSet",
    "Episode",
    "Provenance",
    "AugmentedSample",
    "load_coco",
    "emit_coco",
    "provenance_sidecar_path",
    "sample_episode",
    "support_set_from_dataset",
    "merge_augmented",
    "expand_support",
]


@dataclass(frozen=True)
class ImageInfo:
    image_id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class Annotation:
    annotation_id: int
    image_id: int
    category_id: int
    box: BoundingBox


@dataclass(frozen=True)
class Category:
    category_id: int
    name: str


@dataclass(frozen=True)
class DetectionDataset:
    images: Tuple[ImageInfo, ...]
    annotations: Tuple[Annotation, ...]
    categories: Tuple[Category, ...]

    def image_by_id(self) -> Dict[int, ImageInfo]:
        return {im.image_id: im for im in self.images}

    def annotations_by_image(self) -> Dict[int, List[Annotation]]:
        out: Dict[int, List[Annotation]] = {im.image_id: [] for im in self.images}
        for ann in self.annotations:
            out[ann.image_id].append(ann)
        return out

    def category_ids(self) -> List[int]:
        return [c.category_id for c in self.categories]


def _require(cond: bool, message: str, error=FormatError):
    if not cond:
        raise error(message)


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"{what} must be an integer, got {value!r}")
    return value


def _canonical_box(bbox, what: str) -> BoundingBox:
    _require(isinstance(bbox, list) and len(bbox) == 4, f"{what}: bbox must be [x, y, w, h]")
    try:
        x, y, w, h = (float(v) for v in bbox)
    except (TypeError, ValueError):
        raise FormatError(f"{what}: bbox entries must be numbers, got {bbox!r}") from None
    if not all(map(math.isfinite, (x, y, w, h))):
        raise ValidationError(f"{what}: bbox has non-finite entries")
    if w <= 0 or h <= 0:
        raise ValidationError(f"{what}: bbox size must be positive, got {bbox!r}")
    x0, y0 = math.floor(x), math.floor(y)
    x1, y1 = math.ceil(x + w), math.ceil(y + h)
    if x0 < 0 or y0 < 0:
        raise ValidationError(f"{what}: bbox origin must be non-negative, got {bbox!r}")
    return BoundingBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0)


def load_coco(path) -> DetectionDataset:
    """Parse and fully validate a COCO annotation file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path!r} is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        _require(isinstance(doc.get(key), list), f"missing or non-list {key!r} section")

    images = []
    for i, entry in enumerate(doc["images"]):
        _require(isinstance(entry, dict), f"images[{i}] must be an object")
        image_id = _as_int(entry.get("id"), f"images[{i}].id")
        file_name = entry.get("file_name")
        _require(isinstance(file_name, str) and file_name, f"images[{i}].file_name must be a string")
        width = _as_int(entry.get("width"), f"images[{i}].width")
        height = _as_int(entry.get("height"), f"images[{i}].height")
        if width < 1 or height < 1:
            raise ValidationError(f"images[{i}] has non-positive dimensions {width}x{height}")
        images.append(ImageInfo(image_id, file_name, width, height))
    img_by_id = {}
    for im in images:
        if im.image_id in img_by_id:
            raise DuplicateIdError(f"duplicate image id {im.image_id}")
        img_by_id[im.image_id] = im

    categories = []
    seen_cats = set()
    for i, entry in enumerate(doc["categories"]):
        _require(isinstance(entry, dict), f"categories[{i}] must be an object")
        cat_id = _as_int(entry.get("id"), f"categories[{i}].id")
        name = entry.get("name")
        _require(isinstance(name, str) and name, f"categories[{i}].name must be a string")
        if cat_id in seen_cats:
            raise DuplicateIdError(f"duplicate category id {cat_id}")
        seen_cats.add(cat_id)
        categories.append(Category(cat_id, name))

    annotations = []
    seen_anns = set()
    for i, entry in enumerate(doc["annotations"]):
        _require(isinstance(entry, dict), f"annotations[{i}] must be an object")
        ann_id = _as_int(entry.get("id"), f"annotations[{i}].id")
        image_id = _as_int(entry.get("image_id"), f"annotations[{i}].image_id")
        cat_id = _as_int(entry.get("category_id"), f"annotations[{i}].category_id")
        if ann_id in seen_anns:
            raise DuplicateIdError(f"duplicate annotation id {ann_id}")
        seen_anns.add(ann_id)
        if image_id not in img_by_id:
            raise ValidationError(f"annotation {ann_id} references missing image id {image_id}")
        if cat_id not in seen_cats:
            raise ValidationError(f"annotation {ann_id} references missing category id {cat_id}")
        box = _canonical_box(entry.get("bbox"), f"annotation {ann_id}")
        im = img_by_id[image_id]
        try:
            box.validate_within(im.width, im.height)
        except GeometryError as exc:
            raise ValidationError(f"annotation {ann_id} out of image bounds: {exc}") from exc
        annotations.append(Annotation(ann_id, image_id, cat_id, box))

    return DetectionDataset(tuple(images), tuple(annotations), tuple(categories))


def provenance_sidecar_path(annotation_path) -> str:
    base, _ = os.path.splitext(os.fspath(annotation_path))
    return base + ".provenance.jsonl"


def emit_coco(dataset: DetectionDataset, path, provenance: Optional[Sequence[dict]] = None) -> None:
    """Write a COCO annotation file (and a JSONL provenance sidecar if given).

    Output is canonical (sorted keys, fixed separators) so identical inputs
    produce byte-identical files.
    """
    doc = {
        "images": [
            {"id": im.image_id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in dataset.images
        ],
        "annotations": [
            {
                "id": a.annotation_id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": [a.box.x, a.box.y, a.box.w, a.box.h],
            }
            for a in dataset.annotations
        ],
        "categories": [{"id": c.category_id, "name": c.name} for c in dataset.categories],
    }
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = os.fspath(path)
    try:
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
        if provenance is not None:
            lines = [json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in provenance]
            side = provenance_sidecar_path(path)
            tmp = f"{side}.tmp.{os.getpid()}"
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + ("\n" if lines else ""))
            os.replace(tmp, side)
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc


# -- episodes and support sets ---------------------------------------------


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int
    k_shot: int
    seed: int

    def __post_init__(self):
        if self.n_way < 1 or self.k_shot < 1:
            raise ValidationError(f"n_way and k_shot must be positive, got {self.n_way}, {self.k_shot}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass(frozen=True)
class LabeledBox:
    box: BoundingBox
    category_id: int
    annotation_id: Optional[int] = None


@dataclass(frozen=True)
class SupportSample:
    """One image the pipeline will augment, with its ground-truth boxes."""

    sample_id: Union[int, str]
    image_path: str
    width: int
    height: int
    boxes: Tuple[LabeledBox, ...]

    def __post_init__(self):
        if not self.boxes:
            raise ValidationError(f"support sample {self.sample_id!r} has no boxes")

    def category_ids(self) -> set:
        return {lb.category_id for lb in self.boxes}


@dataclass(frozen=True)
class SupportSet:
    samples: Tuple[SupportSample, ...]
    categories: Tuple[Category, ...]

    def per_class_counts(self) -> Dict[int, int]:
        counts = {c.category_id: 0 for c in self.categories}
        for sample in self.samples:
            for cat in sample.category_ids():
                if cat in counts:
                    counts[cat] += 1
        return counts


@dataclass(frozen=True)
class Episode:
    support: SupportSet
    query_image_ids: Tuple[int, ...]
    spec: EpisodeSpec


def sample_episode(ds: DetectionDataset, spec: EpisodeSpec, images_root: str = "") -> Episode:
    """Seeded N-way K-shot draw: N categories, K designated images each.

    Deterministic for a fixed (dataset, spec). Images holding several
    sampled categories count toward each one. Remaining images that contain
    any sampled category form the query pool, disjoint from the support.
    """
    if spec.n_way > len(ds.categories):
        raise InsufficientDataError(
            f"n_way={spec.n_way} exceeds the {len(ds.categories)} categories available"
        )
    cat_to_images: Dict[int, set] = {c.category_id: set() for c in ds.categories}
    for ann in ds.annotations:
        cat_to_images[ann.category_id].add(ann.image_id)
    eligible = sorted(cid for cid, imgs in cat_to_images.items() if len(imgs) >= spec.k_shot)
    if len(eligible) < spec.n_way:
        raise InsufficientDataError(
            f"only {len(eligible)} categories have >= {spec.k_shot} images; need {spec.n_way}"
        )
    rng = np.random.default_rng(spec.seed)
    sampled = [int(c) for c in rng.choice(eligible, size=spec.n_way, replace=False)]

    support_ids: List[int] = []
    for cid in sampled:
        pool = sorted(cat_to_images[cid])
        picks = rng.choice(pool, size=spec.k_shot, replace=False)
        for image_id in sorted(int(v) for v in picks):
            if image_id not in support_ids:
                support_ids.append(image_id)

    sampled_set = set(sampled)
    img_by_id = ds.image_by_id()
    anns_by_img = ds.annotations_by_image()
    samples = []
    for image_id in support_ids:
        im = img_by_id[image_id]
        boxes = tuple(
            LabeledBox(a.box, a.category_id, a.annotation_id)
            for a in anns_by_img[image_id]
            if a.category_id in sampled_set
        )
        samples.append(
            SupportSample(
                sample_id=image_id,
                image_path=os.path.join(images_root, im.file_name) if images_root else im.file_name,
                width=im.width,
                height=im.height,
                boxes=boxes,
            )
        )

    support_id_set = set(support_ids)
    query_ids = tuple(
        sorted(
            {
                a.image_id
                for a in ds.annotations
                if a.category_id in sampled_set and a.image_id not in support_id_set
            }
        )
    )
    categories = tuple(c for c in ds.categories if c.category_id in sampled_set)
    return Episode(
        support=SupportSet(tuple(samples), categories),
        query_image_ids=query_ids,
        spec=spec,
    )


def support_set_from_dataset(ds: DetectionDataset, images_root: str = "") -> SupportSet:
    """Treat a whole (small) dataset as the support set, e.g. a fixed shot file."""
    anns_by_img = ds.annotations_by_image()
    samples = []
    for im in ds.images:
        anns = anns_by_img[im.image_id]
        if not anns:
            raise ValidationError(f"support image {im.image_id} has no annotations")
        samples.append(
            SupportSample(
                sample_id=im.image_id,
                image_path=os.path.join(images_root, im.file_name) if images_root else im.file_name,
                width=im.width,
                height=im.height,
                boxes=tuple(LabeledBox(a.box, a.category_id, a.annotation_id) for a in anns),
            )
        )
    return SupportSet(tuple(samples), ds.categories)


# -- augmented samples and expansion ----------------------------------------


@dataclass(frozen=True)
class Provenance:
    source_sample_id: Union[int, str]
    background_record_id: int
    generation_seed: int
    generator_params: GenerationParams
    filler_params: GenerationParams
    config_hash: str

    def to_json(self) -> dict:
        return {
            "source_sample_id": self.source_sample_id,
            "background_record_id": self.background_record_id,
            "generation_seed": self.generation_seed,
            "generator_params": self.generator_params.to_wire(),
            "filler_params": self.filler_params.to_wire(),
            "config_hash": self.config_hash,
        }


@dataclass(frozen=True)
class AugmentedSample:
    """A generated image plus the carried-over annotations and provenance."""

    image_path: str
    width: int
    height: int
    boxes: Tuple[LabeledBox, ...]
    provenance: Provenance

    def to_provenance_json(self) -> dict:
        rec = {"output_image": self.image_path}
        rec.update(self.provenance.to_json())
        return rec


def merge_augmented(
    support: SupportSet,
    augmented: Sequence[AugmentedSample],
    relative_to: str = "",
):
    """Combine originals and generated samples into one emittable dataset.

    Originals keep their image ids, boxes, and annotation ids; augmented
    images receive fresh ids after the existing maximum, assigned in input
    order so emission is deterministic. Returns the dataset plus one
    provenance record per augmented image (ready for the JSONL sidecar).
    """

    def _rel(path: str) -> str:
        return os.path.relpath(path, relative_to) if relative_to else path

    images: List[ImageInfo] = []
    annotations: List[Annotation] = []
    used_ann_ids = {
        lb.annotation_id for s in support.samples for lb in s.boxes if lb.annotation_id is not None
    }
    next_ann = 1

    def fresh_ann_id() -> int:
        nonlocal next_ann
        while next_ann in used_ann_ids:
            next_ann += 1
        used_ann_ids.add(next_ann)
        return next_ann

    int_ids = [s.sample_id for s in support.samples if isinstance(s.sample_id, int)]
    if len(int_ids) != len(support.samples):
        raise ValidationError("original support ids must be integers to emit COCO")
    next_image = (max(int_ids) if int_ids else 0) + 1

    for sample in support.samples:
        images.append(ImageInfo(sample.sample_id, _rel(sample.image_path), sample.width, sample.height))
        for lb in sample.boxes:
            ann_id = lb.annotation_id if lb.annotation_id is not None else fresh_ann_id()
            annotations.append(Annotation(ann_id, sample.sample_id, lb.category_id, lb.box))

    provenance = []
    for aug in augmented:
        image_id = next_image
        next_image += 1
        images.append(ImageInfo(image_id, _rel(aug.image_path), aug.width, aug.height))
        for lb in aug.boxes:
            annotations.append(Annotation(fresh_ann_id(), image_id, lb.category_id, lb.box))
        rec = aug.to_provenance_json()
        rec["image_id"] = image_id
        rec["output_image"] = _rel(aug.image_path)
        provenance.append(rec)

    dataset = DetectionDataset(tuple(images), tuple(annotations), tuple(support.categories))
    return dataset, provenance


def expand_support(
    support: SupportSet, generated: Sequence[AugmentedSample], n: int
) -> SupportSet:
    """Fold n generated samples per original into the support set.

    Checks the bookkeeping strictly: every generated sample's provenance
    must point at a support sample, and every support sample must have
    exactly n. The originals come through untouched, so per-class counts
    go from K to K*(n+1).
    """
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    originals = {s.sample_id: s for s in support.samples}
    if len(originals) != len(support.samples):
        raise DuplicateIdError("support set has duplicate sample ids")
    by_source: Dict[Union[int, str], List[AugmentedSample]] = {sid: [] for sid in originals}
    for aug in generated:
        src = aug.provenance.source_sample_id
        if src not in originals:
            raise ValidationError(f"generated sample points at unknown support id {src!r}")
        by_source[src].append(aug)
    for sid, group in by_source.items():
        if len(group) != n:
            raise AccountingError(
                f"support sample {sid!r} has {len(group)} generated samples, expected {n}"
            )
        src_cats = sorted(lb.category_id for lb in originals[sid].boxes)
        for aug in group:
            aug_cats = sorted(lb.category_id for lb in aug.boxes)
            if src_cats != aug_cats:
                raise ValidationError(
                    f"generated sample for {sid!r} carries categories {aug_cats}, source has {src_cats}"
                )
    new_samples = list(support.samples)
    for sample in support.samples:
        for k, aug in enumerate(by_source[sample.sample_id]):
            new_samples.append(
                SupportSample(
                    sample_id=f"{sample.sample_id}+{k}",
                    image_path=aug.image_path,
                    width=aug.width,
                    height=aug.height,
                    boxes=aug.boxes,
                )
            )
    return SupportSet(tuple(new_samples), support.categories)
