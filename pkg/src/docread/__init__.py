"""End-to-end trainable document reading and entity extraction.

One shared convolutional feature map feeds three heads: anchor-based text
detection, attention-decoder recognition, and IOB entity tagging over a
multimodal (visual + textual) context. Because every head hangs off the same
features, extraction supervision reaches the reading stack during training.
"""

from .backbone import Backbone, BackboneConfig, SharedFeatureMap
from .corpus import (
    DocumentSample,
    EntitySchema,
    Vocabulary,
    derive_schema,
    generate_corpus,
    load_corpus,
    save_corpus,
)
from .evaluate import EvalReport, score
from .model import (
    DocumentModel,
    ModelConfig,
    apply_ablation,
    desk_scale_config,
    paper_scale_config,
)
from .pipeline import run_pipeline
from .training import TrainConfig, joint_loss, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Backbone",
    "BackboneConfig",
    "SharedFeatureMap",
    "DocumentSample",
    "EntitySchema",
    "Vocabulary",
    "derive_schema",
    "generate_corpus",
    "load_corpus",
    "save_corpus",
    "EvalReport",
    "score",
    "DocumentModel",
    "ModelConfig",
    "apply_ablation",
    "desk_scale_config",
    "paper_scale_config",
    "run_pipeline",
    "TrainConfig",
    "joint_loss",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "__version__",
]
