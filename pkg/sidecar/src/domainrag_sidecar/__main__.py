"""Run the sidecar: `python -m domainrag_sidecar [options]`."""

import argparse
import sys

from .adapters import AdapterLoadError
from .config import FALLBACK_MODELS, SidecarConfig
from .service import create_app
from .wire import CAPABILITIES


def build_parser():
    parser = argparse.ArgumentParser(prog="domainrag-sidecar")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8571)
    parser.add_argument("--encode-dim", type=int, default=64)
    parser.add_argument("--prompt-dim", type=int, default=64)
    parser.add_argument("--feature-channels", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--model", action="append", default=[], metavar="CAPABILITY=MODEL_ID",
        help="override the model bound to one capability (repeatable)",
    )
    parser.add_argument(
        "--disable", action="append", default=[], choices=list(CAPABILITIES),
        help="serve without this capability (repeatable)",
    )
    parser.add_argument(
        "--fallback-models", action="store_true",
        help="bind the dependency-free numpy models (no torch/opencv needed)",
    )
    return parser


def config_from_args(args) -> SidecarConfig:
    models = dict(FALLBACK_MODELS) if args.fallback_models else None
    overrides = {}
    for item in args.model:
        if "=" not in item:
            raise ValueError(f"--model expects CAPABILITY=MODEL_ID, got {item!r}")
        cap, _, model_id = item.partition("=")
        overrides[cap.strip()] = model_id.strip()
    kwargs = dict(
        host=args.host,
        port=args.port,
        encode_dim=args.encode_dim,
        prompt_dim=args.prompt_dim,
        feature_channels=args.feature_channels,
        seed=args.seed,
        disabled=tuple(args.disable),
    )
    if args.fallback_models:
        models.update(overrides)
        if args.feature_channels == 256:
            kwargs["feature_channels"] = 8  # the numpy extractor default width
        return SidecarConfig(models=models, **kwargs)
    if overrides:
        from .config import DEFAULT_MODELS

        models = dict(DEFAULT_MODELS)
        models.update(overrides)
        return SidecarConfig(models=models, **kwargs)
    return SidecarConfig(**kwargs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        app = create_app(config)
    except (AdapterLoadError, ValueError) as exc:
        print(f"startup aborted: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
