"""Command-line interface.

Commands: index-build, augment, retrieve, metrics, episode. Shared flags
pick the config file, a domain preset, seed/worker overrides, in-process
fake backends, and keep-going failure collection.

Exit codes: 0 success, 2 validation/configuration error, 3 backend failure,
4 partial failure under --keep-going.
"""

import argparse
import json
import os
import sys

from .config import ENDPOINTS_ENV_VAR, PRESETS, PipelineConfig, load_config
from .dataset import (
    Annotation,
    DetectionDataset,
    EpisodeSpec,
    emit_coco,
    load_coco,
    sample_episode,
    support_set_from_dataset,
)
from .errors import (
    BackendUnavailable,
    ConfigError,
    DomainRagError,
    PipelineError,
    ProtocolViolation,
)
from .gateway.client import ModelGateway
from .gateway.types import Capability
from .imageio import load_image
from .index import load_index, retrieve, save_index
from .metrics import clip_i, fit_gaussian, frechet_distance
from .pipeline import build_index_from_dataset, describe_background, run_augmentation

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_PARTIAL = 4

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _add_shared_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="domain preset name")
    parser.add_argument("--seed", type=int, help="override the pipeline seed")
    parser.add_argument("--workers", type=int, help="concurrent support images")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument(
        "--fake-backends",
        action="store_true",
        help="swap every endpoint for deterministic in-process fakes",
    )
    parser.add_argument(
        "--keep-going",
        action="store_true",
        help="collect per-support failures into a report instead of aborting",
    )


def _effective_config(args) -> PipelineConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    return load_config(path=args.config, preset=args.preset, overrides=overrides)


def _gateway(config: PipelineConfig, fake: bool) -> ModelGateway:
    if fake:
        return ModelGateway.with_fakes(seed=config.seed)
    endpoints = config.backend_endpoints()
    missing = set(Capability) - set(endpoints)
    if missing:
        raise ConfigError(
            f"no endpoint configured for: {sorted(c.value for c in missing)} "
            f"(set endpoint_* keys, {ENDPOINTS_ENV_VAR}, or pass --fake-backends)"
        )
    return ModelGateway.from_endpoints(endpoints)


def _list_images(path: str):
    if os.path.isdir(path):
        names = sorted(
            n for n in os.listdir(path) if n.lower().endswith(_IMAGE_SUFFIXES)
        )
        return [os.path.join(path, n) for n in names]
    return [path]


def cmd_index_build(args) -> int:
    config = _effective_config(args)
    gateway = _gateway(config, args.fake_backends)
    dataset = load_coco(args.dataset)
    root = args.images_root if args.images_root is not None else os.path.dirname(os.path.abspath(args.dataset))
    index = build_index_from_dataset(dataset, gateway, images_root=root)
    save_index(index, args.output)
    print(f"indexed {len(index)} backgrounds -> {args.output}")
    return EXIT_OK


def cmd_augment(args) -> int:
    config = _effective_config(args)
    gateway = _gateway(config, args.fake_backends)
    support_ds = load_coco(args.support)
    root = args.images_root if args.images_root is not None else os.path.dirname(os.path.abspath(args.support))
    support = support_set_from_dataset(support_ds, images_root=root)
    index = load_index(args.index)
    outcome = run_augmentation(
        support, index, gateway, config, args.output_dir, keep_going=args.keep_going
    )
    print(
        f"augmented {len(support.samples)} support images -> "
        f"{len(outcome.augmented)} generated samples ({outcome.annotation_path})"
    )
    if outcome.failures:
        report = [
            {"support_id": sid, "stage": stage, "message": message}
            for sid, stage, message in outcome.failures
        ]
        report_path = os.path.join(args.output_dir, "failures.json")
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        print(f"{len(outcome.failures)} support images failed; report at {report_path}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_retrieve(args) -> int:
    config = _effective_config(args)
    gateway = _gateway(config, args.fake_backends)
    index = load_index(args.index)
    pixels = load_image(args.query)
    semantic, style = describe_background(gateway, pixels)
    from .index import rerank_style, retrieve_semantic

    first = retrieve_semantic(index, semantic, m=config.m)
    second = rerank_style(index, first, style, n=config.n_retrieve)
    doc = {
        "query": args.query,
        "m": config.m,
        "n": config.n_retrieve,
        "semantic": [{"record_id": e.record_id, "score": e.score} for e in first.entries],
        "reranked": [
            {"record_id": e.record_id, "score": e.score, "style_distance": e.style_distance}
            for e in second.entries
        ],
    }
    payload = json.dumps(doc, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    print(payload)
    return EXIT_OK


def cmd_metrics(args) -> int:
    config = _effective_config(args)
    gateway = _gateway(config, args.fake_backends)
    target_paths = _list_images(args.target)
    generated_paths = _list_images(args.generated)
    if not target_paths:
        raise ConfigError(f"no target images found at {args.target!r}")
    if not generated_paths:
        raise ConfigError(f"no generated images found at {args.generated!r}")
    target_vecs = [gateway.encode_image(load_image(p)) for p in target_paths]
    generated_vecs = [gateway.encode_image(load_image(p)) for p in generated_paths]

    report = {
        "n_target": len(target_vecs),
        "n_generated": len(generated_vecs),
        "clip_i": float(
            sum(clip_i(t, generated_vecs) for t in target_vecs) / len(target_vecs)
        ),
    }
    if len(generated_vecs) < 2:
        report["fid_unavailable_reason"] = (
            "FID needs at least 2 generated images to fit a distribution; "
            f"got {len(generated_vecs)}"
        )
    elif len(target_vecs) < 2:
        report["fid_unavailable_reason"] = (
            "FID needs at least 2 target images to fit a distribution; "
            f"got {len(target_vecs)}"
        )
    else:
        report["fid"] = frechet_distance(fit_gaussian(target_vecs), fit_gaussian(generated_vecs))
    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    print(payload)
    return EXIT_OK


def cmd_episode(args) -> int:
    config = _effective_config(args)
    dataset = load_coco(args.dataset)
    spec = EpisodeSpec(n_way=args.n_way, k_shot=args.k_shot, seed=config.seed)
    episode = sample_episode(dataset, spec)
    os.makedirs(args.output_dir, exist_ok=True)

    images = []
    annotations = []
    seen_imgs = set()
    for sample in episode.support.samples:
        if sample.sample_id not in seen_imgs:
            seen_imgs.add(sample.sample_id)
            images.append(
                next(i for i in dataset.images if i.image_id == sample.sample_id)
            )
        for lb in sample.boxes:
            annotations.append(
                Annotation(lb.annotation_id, sample.sample_id, lb.category_id, lb.box)
            )
    support_ds = DetectionDataset(tuple(images), tuple(annotations), episode.support.categories)
    support_path = os.path.join(args.output_dir, "support.json")
    emit_coco(support_ds, support_path)

    query_doc = {
        "n_way": spec.n_way,
        "k_shot": spec.k_shot,
        "seed": spec.seed,
        "category_ids": [c.category_id for c in episode.support.categories],
        "support_image_ids": sorted({s.sample_id for s in episode.support.samples}),
        "query_image_ids": list(episode.query_image_ids),
    }
    query_path = os.path.join(args.output_dir, "query.json")
    with open(query_path, "w", encoding="utf-8") as fh:
        json.dump(query_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"episode: {spec.n_way}-way {spec.k_shot}-shot, "
        f"{len(episode.support.samples)} support images, "
        f"{len(episode.query_image_ids)} query images -> {args.output_dir}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="domainrag",
        description="Retrieval-guided background augmentation for detection support sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index-build", help="embed a background database into an index file")
    p.add_argument("dataset", help="COCO annotation file for the background database")
    p.add_argument("output", help="index file to write")
    p.add_argument("--images-root", help="directory image paths are relative to")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("augment", help="generate domain-aligned samples for a support set")
    p.add_argument("support", help="COCO annotation file of the support set")
    p.add_argument("index", help="background index file")
    p.add_argument("output_dir", help="directory for images, annotations, provenance")
    p.add_argument("--images-root", help="directory image paths are relative to")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("retrieve", help="debug the two retrieval stages for one query image")
    p.add_argument("query", help="query image path")
    p.add_argument("index", help="background index file")
    p.add_argument("--output", help="also write the JSON ranking here")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("metrics", help="similarity/FID report for generated images")
    p.add_argument("target", help="target image file or directory")
    p.add_argument("generated", help="directory of generated images")
    p.add_argument("--output", help="also write the JSON report here")
    _add_shared_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("episode", help="sample an N-way K-shot episode from a dataset")
    p.add_argument("dataset", help="COCO annotation file")
    p.add_argument("output_dir", help="directory for support.json / query.json")
    p.add_argument("--n-way", type=int, required=True)
    p.add_argument("--k-shot", type=int, required=True)
    _add_shared_flags(p)
    p.set_defaults(func=cmd_episode)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (BackendUnavailable, ProtocolViolation)):
            return EXIT_BACKEND
        return EXIT_VALIDATION
    except (BackendUnavailable, ProtocolViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DomainRagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
