"""End-to-end orchestration: index building and support-set augmentation.

For each support image the stages run in order: mask the ground-truth
boxes, inpaint them away to recover a clean background, embed that
background (semantic + style), retrieve domain-similar candidates from the
pool, then per output fuse the prompt embeddings, generate a new
background, repaint the masked region of the (optionally resampled) support
image under that background's prompt, and compose so every foreground pixel
survives verbatim. Annotations ride along through the resample transforms.

Every seed a generative backend sees is derived from (config seed, support
id, output rank), so a fixed config reproduces the output tree byte for
byte. Any stage failure aborts that support image with a diagnostic naming
the stage; nothing is ever skipped silently.
"""

import hashlib
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import FusionMode, PipelineConfig
from .dataset import (
    AugmentedSample,
    DetectionDataset,
    LabeledBox,
    Provenance,
    SupportSample,
    SupportSet,
    emit_coco,
    expand_support,
    merge_augmented,
)
from .embedding import fuse, style_vector
from .errors import DomainRagError, PipelineError
from .gateway.client import ModelGateway
from .geometry import (
    BoundingBox,
    apply_resample,
    apply_resample_mask,
    build_mask,
    compose,
    inverse_plan,
    plan_resample,
    transform_bbox,
)
from .imageio import load_image, save_png
from .index import (
    BackgroundIndex,
    BackgroundRecord,
    RecordSource,
    augment_pool_with_support,
    build_index,
    retrieve,
)

__all__ = [
    "derive_seed",
    "describe_background",
    "build_index_from_dataset",
    "AugmentationOutcome",
    "run_augmentation",
]


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 64-bit seed derived from the run seed and a context path."""
    h = hashlib.sha256(struct.pack("<Q", base_seed))
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return struct.unpack("<Q", h.digest()[:8])[0]


def describe_background(gateway: ModelGateway, image: np.ndarray):
    """Semantic embedding + style vector for one background image."""
    semantic = gateway.encode_image(image)
    style = style_vector(gateway.extract_feature_map(image))
    return semantic, style


def build_index_from_dataset(
    dataset: DetectionDataset, gateway: ModelGateway, images_root: str = ""
) -> BackgroundIndex:
    """One BackgroundRecord per database image, in ascending image-id order."""
    records = []
    for im in sorted(dataset.images, key=lambda i: i.image_id):
        path = os.path.join(images_root, im.file_name) if images_root else im.file_name
        pixels = load_image(path)
        semantic, style = describe_background(gateway, pixels)
        records.append(
            BackgroundRecord(
                record_id=im.image_id,
                image_ref=path,
                embedding=semantic,
                style=style,
                source=RecordSource.DATABASE,
            )
        )
    return build_index(records)


@dataclass
class AugmentationOutcome:
    augmented: List[AugmentedSample]
    failures: List[Tuple[object, str, str]]  # (support id, stage, message)
    annotation_path: Optional[str]
    expanded: Optional[SupportSet]


class _Stage:
    """Tags exceptions with the stage name and support id."""

    def __init__(self, name: str, support_id):
        self.name = name
        self.support_id = support_id

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, DomainRagError) and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, self.support_id, exc) from exc
        return False


def _inpainted_background(gateway, sample: SupportSample, pixels, mask):
    b_init = gateway.inpaint_background(pixels, mask)
    return b_init


def _augment_one_sample(
    sample: SupportSample,
    index: BackgroundIndex,
    gateway: ModelGateway,
    config: PipelineConfig,
    images_dir: str,
    config_hash: str,
    candidate_pixels: Dict[int, np.ndarray],
    precomputed_binit: Optional[np.ndarray] = None,
) -> List[AugmentedSample]:
    sid = sample.sample_id
    with _Stage("load", sid):
        pixels = load_image(sample.image_path)
        if pixels.shape[:2] != (sample.height, sample.width):
            raise DomainRagError(
                f"image file is {pixels.shape[1]}x{pixels.shape[0]} but the "
                f"annotations declare {sample.width}x{sample.height}"
            )
    with _Stage("mask", sid):
        mask = build_mask(sample.width, sample.height, [lb.box for lb in sample.boxes])
    with _Stage("inpaint", sid):
        b_init = precomputed_binit if precomputed_binit is not None else gateway.inpaint_background(pixels, mask)
    with _Stage("describe_background", sid):
        semantic, style = describe_background(gateway, b_init)
    with _Stage("retrieve", sid):
        m = min(config.m, len(index))
        n = min(config.n_retrieve, m)
        candidates = retrieve(index, semantic, style, m=m, n=n)
        if not candidates.entries:
            raise DomainRagError("retrieval returned no candidates")
    with _Stage("prompt_encode", sid):
        prompt_bg = gateway.encode_prompt(b_init)
    with _Stage("plan_resample", sid):
        plan = plan_resample(pixels, config.resample_policy)
        up_image = apply_resample(pixels, plan)
        up_mask = apply_resample_mask(mask, plan)
        inv = inverse_plan(plan)

    outputs = []
    for k in range(config.n_generate):
        if config.fusion_mode is FusionMode.TOP1_MULTISEED:
            entry = candidates.entries[0]
        else:
            entry = candidates.entries[k % len(candidates.entries)]
        with _Stage("candidate_prompt", sid):
            if entry.record_id not in candidate_pixels:
                candidate_pixels[entry.record_id] = load_image(index.record(entry.record_id).image_ref)
            prompt_re = gateway.encode_prompt(candidate_pixels[entry.record_id])
        with _Stage("fuse", sid):
            fused = fuse(prompt_bg, prompt_re, config.weights)
        gen_seed = derive_seed(config.seed, "generate", sid, k)
        with _Stage("generate", sid):
            gen_params = replace(config.generator_params, seed=gen_seed)
            b_dom = gateway.generate_background(fused, gen_params)
        with _Stage("background_prompt", sid):
            prompt_gen = gateway.encode_prompt(b_dom)
        with _Stage("fill", sid):
            fill_params = replace(config.filler_params, seed=derive_seed(config.seed, "fill", sid, k))
            filled = gateway.fill_masked(up_image, up_mask, prompt_gen, fill_params)
        with _Stage("compose", sid):
            composed = compose(up_image, up_mask, filled)
            final = apply_resample(composed, inv)
        with _Stage("emit", sid):
            out_h, out_w = final.shape[:2]
            boxes = []
            for lb in sample.boxes:
                fwd = transform_bbox(lb.box, plan)
                back = transform_bbox(fwd, inv)
                x = min(back.x, out_w - 1)
                y = min(back.y, out_h - 1)
                boxes.append(
                    LabeledBox(
                        box=BoundingBox(x, y, min(back.w, out_w - x), min(back.h, out_h - y)),
                        category_id=lb.category_id,
                    )
                )
            file_name = f"aug_{sid}_{k:02d}.png"
            out_path = os.path.join(images_dir, file_name)
            save_png(final, out_path)
            outputs.append(
                AugmentedSample(
                    image_path=out_path,
                    width=out_w,
                    height=out_h,
                    boxes=tuple(boxes),
                    provenance=Provenance(
                        source_sample_id=sid,
                        background_record_id=entry.record_id,
                        generation_seed=gen_seed,
                        generator_params=gen_params,
                        filler_params=fill_params,
                        config_hash=config_hash,
                    ),
                )
            )
    return outputs


def run_augmentation(
    support: SupportSet,
    index: BackgroundIndex,
    gateway: ModelGateway,
    config: PipelineConfig,
    out_dir: str,
    keep_going: bool = False,
) -> AugmentationOutcome:
    """Augment every support sample and emit the combined dataset.

    Stage failures abort the run unless keep_going is set, in which case
    they are collected (per support id) and the successful remainder is
    still emitted — without the strict expansion accounting, which can no
    longer hold.
    """
    os.makedirs(out_dir, exist_ok=True)
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(images_dir, exist_ok=True)
    config_hash = config.config_hash()

    work_index = index
    binit_by_sample: Dict[object, np.ndarray] = {}
    if config.include_support_in_pool:
        # The whole inpainted support set joins the retrieval pool up front.
        backgrounds_dir = os.path.join(out_dir, "backgrounds")
        os.makedirs(backgrounds_dir, exist_ok=True)
        max_id = max(r.record_id for r in index.records)
        pool_records = []
        for offset, sample in enumerate(support.samples):
            pixels = load_image(sample.image_path)
            mask = build_mask(sample.width, sample.height, [lb.box for lb in sample.boxes])
            b_init = gateway.inpaint_background(pixels, mask)
            binit_by_sample[sample.sample_id] = b_init
            ref = os.path.join(backgrounds_dir, f"binit_{sample.sample_id}.png")
            save_png(b_init, ref)
            semantic, style = describe_background(gateway, b_init)
            pool_records.append(
                BackgroundRecord(
                    record_id=max_id + 1 + offset,
                    image_ref=ref,
                    embedding=semantic,
                    style=style,
                    source=RecordSource.INPAINTED_SUPPORT,
                )
            )
        work_index = augment_pool_with_support(index, pool_records)

    candidate_pixels: Dict[int, np.ndarray] = {}
    results: List[Optional[List[AugmentedSample]]] = [None] * len(support.samples)
    failures: List[Tuple[object, str, str]] = []

    def job(pos: int):
        sample = support.samples[pos]
        return _augment_one_sample(
            sample,
            work_index,
            gateway,
            config,
            images_dir,
            config_hash,
            candidate_pixels if config.workers == 1 else {},
            precomputed_binit=binit_by_sample.get(sample.sample_id),
        )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {pos: pool.submit(job, pos) for pos in range(len(support.samples))}
            for pos, fut in futures.items():
                try:
                    results[pos] = fut.result()
                except PipelineError as exc:
                    if not keep_going:
                        raise
                    failures.append((exc.support_id, exc.stage, str(exc)))
    else:
        for pos in range(len(support.samples)):
            try:
                results[pos] = job(pos)
            except PipelineError as exc:
                if not keep_going:
                    raise
                failures.append((exc.support_id, exc.stage, str(exc)))

    augmented = [aug for group in results if group is not None for aug in group]

    expanded = None
    if not failures:
        expanded = expand_support(support, augmented, config.n_generate)

    succeeded = [s for pos, s in enumerate(support.samples) if results[pos] is not None]
    emit_support = support if not failures else SupportSet(tuple(succeeded), support.categories)
    dataset, provenance = merge_augmented(emit_support, augmented, relative_to=out_dir)
    annotation_path = os.path.join(out_dir, "annotations.json")
    emit_coco(dataset, annotation_path, provenance)

    return AugmentationOutcome(
        augmented=augmented,
        failures=failures,
        annotation_path=annotation_path,
        expanded=expanded,
    )
