"""Retrieval-guided compositional background augmentation for detection data.

The pipeline decomposes each support image into foreground and background,
retrieves domain-similar backgrounds (semantic cosine search re-ranked by
channel-statistics style distance), synthesizes new backgrounds through
pluggable generative backends, and composes annotation-preserving training
images. See the README for the CLI and the wire protocol.
"""

__version__ = "0.1.0"

from . import errors
from .config import PRESETS, FusionMode, PipelineConfig, load_config
from .dataset import (
    AugmentedSample,
    DetectionDataset,
    Episode,
    EpisodeSpec,
    SupportSample,
    SupportSet,
    emit_coco,
    expand_support,
    load_coco,
    sample_episode,
)
from .embedding import FusionWeights, cosine_similarity, fuse, style_distance, style_vector
from .gateway import (
    BackendEndpoint,
    Capability,
    FakeModelSuite,
    GenerationParams,
    ModelGateway,
)
from .geometry import (
    BoundingBox,
    ResamplePlan,
    ResamplePolicy,
    build_mask,
    compose,
    needs_upsample,
    plan_resample,
)
from .index import (
    BackgroundIndex,
    BackgroundRecord,
    RetrievalResult,
    augment_pool_with_support,
    build_index,
    load_index,
    rerank_style,
    retrieve,
    retrieve_semantic,
    save_index,
)
from .metrics import clip_i, fit_gaussian, frechet_distance
from .pipeline import build_index_from_dataset, run_augmentation
