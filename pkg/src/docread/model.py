"""Full document model: one backbone, three heads, shared gradients.

Training runs detection, recognition, and tagging off the same feature map
using ground-truth boxes for the reading and extraction paths; inference
swaps in detected boxes and greedy decoding. The `end_to_end` switch controls
whether extraction gradients may reach the reader and backbone; the two
context switches reproduce the fusion ablations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .backbone import Backbone, BackboneConfig
from .context import ContextBlock, ContextConfig
from .corpus.schema import PAD, EntitySchema, Vocabulary, encode_transcript
from .detector import DetectionHead, DetectorConfig, RawDetections
from .extractor import ContextFusion, EntityTagger, ExtractorConfig
from .iob import decode_entities
from .reader import AttentionDecoder, ReaderConfig, RegionEncoder, roi_align_batch


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    reader: ReaderConfig = field(default_factory=ReaderConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    use_visual_ctx: bool = True
    use_textual_ctx: bool = True
    end_to_end: bool = True


def paper_scale_config(**overrides) -> ModelConfig:
    """Dimensions matching the published system where stated."""
    return replace(ModelConfig(), **overrides)


def desk_scale_config(t_max: int = 24, **overrides) -> ModelConfig:
    """Shrunk widths for CPU-budget experiments; same wiring."""
    cfg = ModelConfig(
        backbone=BackboneConfig(stage_channels=(16, 24, 32, 32), d=32),
        detector=DetectorConfig(hidden=32),
        reader=ReaderConfig(
            roi_h=4, roi_w=32, d_r=64, d_s=64, emb_dim=16, attn_dim=64, t_max=t_max
        ),
        context=ContextConfig(d_info=64, heads=4, layers=2, pos_bins=16),
        extractor=ExtractorConfig(d_f=64, hidden=32),
    )
    return replace(cfg, **overrides)


def apply_ablation(cfg: ModelConfig, name: str) -> ModelConfig:
    """Map an ablation name to the context switches."""
    table = {
        "text": (False, False),
        "text+vis": (True, False),
        "text+ctx": (False, True),
        "full": (True, True),
    }
    if name not in table:
        raise ValueError(f"unknown ablation {name!r} (choose from {sorted(table)})")
    vis, ctx = table[name]
    return replace(cfg, use_visual_ctx=vis, use_textual_ctx=ctx)


@dataclass
class DocOutput:
    """Everything the joint loss needs for one document."""

    det: RawDetections
    gt_boxes: np.ndarray
    rcg_logits: torch.Tensor  # (m, T, |vocab|)
    rcg_targets: torch.Tensor  # (m, T) long
    rcg_mask: torch.Tensor  # (m, T) bool, True where the character loss applies
    tag_logits: torch.Tensor  # (m, T, K)
    tag_targets: torch.Tensor  # (m, T) long
    tag_mask: torch.Tensor  # (m, T) bool
    texts: list[str]  # greedy argmax readings, for monitoring


@dataclass
class InferenceResult:
    boxes: np.ndarray  # (n, 4)
    scores: np.ndarray  # (n,)
    texts: list[str]
    tags: list[list[str]]
    entities: dict[str, list[str]]
    entity_sources: dict[str, list[int]]  # box index per extracted value


class DocumentModel(nn.Module):
    def __init__(self, schema: EntitySchema, vocab: Vocabulary, cfg: ModelConfig | None = None):
        super().__init__()
        self.schema = schema
        self.vocab = vocab
        self.cfg = cfg or ModelConfig()
        c = self.cfg
        self.backbone = Backbone(c.backbone)
        self.det_head = DetectionHead(c.backbone.d, c.detector)
        self.encoder = RegionEncoder(c.backbone.d, c.reader.d_r, c.reader.roi_h)
        self.decoder = AttentionDecoder(vocab, c.reader)
        self.context = ContextBlock(c.reader.d_s, c.context)
        self.fusion = ContextFusion(c.backbone.d, c.context.d_info, c.extractor.d_f)
        self.tagger = EntityTagger(c.reader.d_s, c.extractor.d_f, schema, c.extractor)

    def _read(self, fmap, boxes: np.ndarray, targets: torch.Tensor | None):
        crops, _ = roi_align_batch(fmap, boxes, self.cfg.reader.roi_h, self.cfg.reader.roi_w)
        feats = self.encoder(crops)
        outs = self.decoder(feats, targets)
        states = torch.stack([o.states for o in outs], dim=0)
        return crops, outs, states

    def _extract(
        self,
        crops: torch.Tensor,
        states: torch.Tensor,
        char_mask: torch.Tensor,
        boxes: np.ndarray,
        image_size: tuple[int, int],
    ) -> torch.Tensor:
        """Context + fusion + tagging; honors the ablation/detach switches."""
        if not self.cfg.end_to_end:
            crops = crops.detach()
            states = states.detach()
        boxes_t = states.new_tensor(np.asarray(boxes, dtype=np.float64))
        if self.cfg.use_textual_ctx:
            ctx = self.context(states, char_mask, boxes_t, image_size)
            c_tilde = ctx.c_tilde
        else:
            c_tilde = None
        fused = self.fusion(
            crops,
            c_tilde,
            use_visual=self.cfg.use_visual_ctx,
            use_textual=self.cfg.use_textual_ctx,
        )
        return self.tagger(states, fused, char_mask)

    def forward_train(self, sample) -> DocOutput:
        """One labeled document -> losses' raw material (GT boxes throughout)."""
        m = len(sample.transcripts)
        if m == 0:
            raise ValueError("document with zero texts")
        fmap = self.backbone.extract_features(sample.image)
        det = self.det_head(fmap)

        t_cap = self.cfg.reader.t_max
        t = min(max(len(s) for s in sample.transcripts) + 1, t_cap)
        targets = torch.tensor(
            [encode_transcript(s, self.vocab, t) for s in sample.transcripts],
            dtype=torch.long,
        )
        boxes = np.asarray(sample.boxes, dtype=np.float64)
        crops, outs, states = self._read(fmap, boxes, targets)

        rcg_mask = targets != PAD
        lengths = torch.tensor(
            [min(len(s), t - 1) for s in sample.transcripts], dtype=torch.long
        )
        steps = torch.arange(t)
        tag_mask = steps.unsqueeze(0) < lengths.unsqueeze(1)
        tag_targets = torch.zeros((m, t), dtype=torch.long)
        for i, tags in enumerate(sample.char_tags):
            for j, tag in enumerate(tags[: int(lengths[i])]):
                tag_targets[i, j] = self.schema.tag_index(tag)

        tag_logits = self._extract(crops, states, tag_mask, boxes, fmap.image_size)
        return DocOutput(
            det=det,
            gt_boxes=boxes,
            rcg_logits=torch.stack([o.logits for o in outs], dim=0),
            rcg_targets=targets,
            rcg_mask=rcg_mask,
            tag_logits=tag_logits,
            tag_targets=tag_targets,
            tag_mask=tag_mask,
            texts=[o.text for o in outs],
        )

    @torch.no_grad()
    def infer(
        self,
        image,
        score_thresh: float = 0.5,
        nms_iou: float = 0.3,
        max_boxes: int = 100,
        boxes: np.ndarray | None = None,
    ) -> InferenceResult:
        """Full pipeline on one image; pass `boxes` to skip detection."""
        fmap = self.backbone.extract_features(image)
        if boxes is None:
            det = self.det_head.detect(fmap, score_thresh, nms_iou, max_boxes)
            boxes, scores = det.boxes, det.scores
        else:
            boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
            scores = np.ones(len(boxes))
        if len(boxes) == 0:
            return InferenceResult(
                boxes=np.zeros((0, 4)),
                scores=np.zeros(0),
                texts=[],
                tags=[],
                entities={},
                entity_sources={},
            )
        crops, outs, states = self._read(fmap, boxes, None)
        t = states.shape[1]
        lengths = torch.tensor([min(len(o.text), t) for o in outs], dtype=torch.long)
        char_mask = torch.arange(t).unsqueeze(0) < lengths.unsqueeze(1)
        tag_logits = self._extract(crops, states, char_mask, boxes, fmap.image_size)

        texts = [o.text[: int(n)] for o, n in zip(outs, lengths)]
        tags = [
            self.tagger.decode_tags(tag_logits[i], char_mask[i]) for i in range(len(texts))
        ]
        entities: dict[str, list[str]] = {}
        sources: dict[str, list[int]] = {}
        order = np.lexsort((boxes[:, 0], boxes[:, 1]))  # reading order: y, then x
        for i in map(int, order):
            for name, values in decode_entities(tags[i], texts[i]).items():
                entities.setdefault(name, []).extend(values)
                sources.setdefault(name, []).extend([i] * len(values))
        return InferenceResult(
            boxes=boxes,
            scores=np.asarray(scores),
            texts=texts,
            tags=tags,
            entities=entities,
            entity_sources=sources,
        )
