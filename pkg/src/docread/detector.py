"""Anchor-based text detection head.

A single-stage RPN-style head over the shared feature map: per-anchor
objectness logits plus box-delta regression, trained with BCE + smooth-L1
under the usual IoU assignment rule, decoded with greedy NMS at inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .backbone import SharedFeatureMap

# exp() clamp for decoded widths/heights, ~log(1000/16)
_MAX_DELTA_WH = 4.135


@dataclass(frozen=True)
class DetectorConfig:
    scales: tuple[float, ...] = (16.0, 32.0, 64.0)
    ratios: tuple[float, ...] = (1.0, 3.0, 6.0)  # width : height, wide text
    hidden: int = 64
    pos_iou: float = 0.7
    neg_iou: float = 0.3
    sample_size: int = 256
    pos_fraction: float = 0.5

    @property
    def anchors_per_cell(self) -> int:
        return len(self.scales) * len(self.ratios)


class AnchorGrid:
    """All anchor boxes for one feature-map geometry.

    Anchor order matches the flattened head output: cell-major (row, then
    column), anchor-minor; within a cell, scales are the outer loop.
    """

    def __init__(
        self,
        grid: tuple[int, int],
        stride: int,
        image_size: tuple[int, int],
        cfg: DetectorConfig,
    ):
        self.grid = grid
        self.stride = stride
        self.image_size = image_size
        h, w = grid
        shapes = np.array(
            [
                (scale * np.sqrt(ratio), scale / np.sqrt(ratio))
                for scale in cfg.scales
                for ratio in cfg.ratios
            ],
            dtype=np.float64,
        )  # (A, 2) as (width, height)
        cy, cx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
        centers = np.stack([cx, cy], axis=-1).reshape(-1, 1, 2) * stride  # (h*w, 1, 2)
        half = shapes.reshape(1, -1, 2) / 2.0
        self.boxes = np.concatenate(
            [centers - half, centers + half], axis=-1
        ).reshape(-1, 4)  # (h*w*A, 4) x0 y0 x1 y1
        self.sizes = np.broadcast_to(
            shapes.reshape(1, -1, 2), (h * w, shapes.shape[0], 2)
        ).reshape(-1, 2)
        self.centers = np.repeat(centers, shapes.shape[0], axis=1).reshape(-1, 2)

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def clipped(self) -> np.ndarray:
        """Anchor boxes clipped to image bounds; used for training assignment."""
        ih, iw = self.image_size
        out = self.boxes.copy()
        out[:, 0::2] = np.clip(out[:, 0::2], 0.0, iw)
        out[:, 1::2] = np.clip(out[:, 1::2], 0.0, ih)
        return out


@dataclass
class RawDetections:
    """Head output before decoding; the differentiable handle for the loss."""

    logits: torch.Tensor  # (N,)
    deltas: torch.Tensor  # (N, 4) as (tx, ty, tw, th)
    anchors: AnchorGrid


@dataclass
class DetectionOutput:
    boxes: np.ndarray  # (n, 4) pixel x0 y0 x1 y1
    scores: np.ndarray  # (n,) descending

    def __len__(self) -> int:
        return self.boxes.shape[0]


class DetectionHead(nn.Module):
    def __init__(self, d: int, cfg: DetectorConfig | None = None):
        super().__init__()
        self.cfg = cfg or DetectorConfig()
        a = self.cfg.anchors_per_cell
        self.trunk = nn.Sequential(
            nn.Conv2d(d, self.cfg.hidden, 3, padding=1), nn.ReLU(inplace=True)
        )
        self.cls = nn.Conv2d(self.cfg.hidden, a, 1)
        self.reg = nn.Conv2d(self.cfg.hidden, 4 * a, 1)

    def forward(self, fmap: SharedFeatureMap) -> RawDetections:
        x = self.trunk(fmap.chw())
        a = self.cfg.anchors_per_cell
        logits = self.cls(x)[0].permute(1, 2, 0).reshape(-1)
        deltas = self.reg(x)[0].permute(1, 2, 0).reshape(-1, a, 4).reshape(-1, 4)
        anchors = AnchorGrid(fmap.grid, fmap.stride, fmap.image_size, self.cfg)
        return RawDetections(logits=logits, deltas=deltas, anchors=anchors)

    def detect(
        self,
        fmap: SharedFeatureMap,
        score_thresh: float = 0.5,
        nms_iou: float = 0.3,
        max_boxes: int = 100,
        pre_nms_topk: int = 1000,
    ) -> DetectionOutput:
        with torch.no_grad():
            raw = self.forward(fmap)
        scores = torch.sigmoid(raw.logits).numpy().astype(np.float64)
        keep = np.flatnonzero(scores >= score_thresh)
        if keep.size > pre_nms_topk:
            top = np.lexsort((keep, -scores[keep]))[:pre_nms_topk]
            keep = keep[top]
        boxes = decode_boxes(raw.anchors.boxes[keep], raw.deltas.numpy()[keep])
        ih, iw = raw.anchors.image_size
        boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, iw)
        boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, ih)
        valid = (boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1])
        boxes, scores = boxes[valid], scores[keep][valid]
        order = nms(boxes, scores, nms_iou)[:max_boxes]
        return DetectionOutput(boxes=boxes[order], scores=scores[order])


def encode_boxes(anchors: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Box -> anchor-relative deltas (tx, ty, tw, th)."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + aw / 2
    acy = anchors[:, 1] + ah / 2
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    bcx = boxes[:, 0] + bw / 2
    bcy = boxes[:, 1] + bh / 2
    return np.stack(
        [(bcx - acx) / aw, (bcy - acy) / ah, np.log(bw / aw), np.log(bh / ah)], axis=1
    )


def decode_boxes(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + aw / 2
    acy = anchors[:, 1] + ah / 2
    cx = acx + deltas[:, 0] * aw
    cy = acy + deltas[:, 1] * ah
    w = aw * np.exp(np.minimum(deltas[:, 2], _MAX_DELTA_WH))
    h = ah * np.exp(np.minimum(deltas[:, 3], _MAX_DELTA_WH))
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU matrix for (N,4) and (M,4) x0y0x1y1 boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = np.clip(a[:, 2] - a[:, 0], 0, None) * np.clip(a[:, 3] - a[:, 1], 0, None)
    area_b = np.clip(b[:, 2] - b[:, 0], 0, None) * np.clip(b[:, 3] - b[:, 1], 0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def nms(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float) -> np.ndarray:
    """Greedy NMS; returns kept indices in descending score order.

    Equal scores break toward the lower original index so results are
    independent of sort internals. IoU rows are computed one kept box at a
    time, never as a full pairwise matrix.
    """
    if len(boxes) == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(scores)), -scores))
    keep = []
    while order.size:
        idx = int(order[0])
        keep.append(idx)
        rest = order[1:]
        if rest.size == 0:
            break
        ious = box_iou(boxes[idx : idx + 1], boxes[rest])[0]
        order = rest[ious < iou_thresh]
    return np.array(keep, dtype=np.int64)


def match_boxes(
    pred: DetectionOutput, gt_boxes: np.ndarray, iou_thresh: float = 0.5
) -> list[tuple[int, int]]:
    """One-to-one greedy matching by descending IoU; pairs under the threshold dropped.

    Returns (pred_index, gt_index) pairs. Ties break toward lower pred index,
    then lower gt index.
    """
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if len(pred) == 0 or len(gt) == 0:
        return []
    iou = box_iou(pred.boxes, gt)
    pairs: list[tuple[int, int]] = []
    while True:
        best = np.unravel_index(np.argmax(iou), iou.shape)
        if iou[best] < iou_thresh:
            break
        pairs.append((int(best[0]), int(best[1])))
        iou[best[0], :] = -1.0
        iou[:, best[1]] = -1.0
    return pairs


def assign_anchors(
    anchors_clipped: np.ndarray,
    gt_boxes: np.ndarray,
    pos_iou: float,
    neg_iou: float,
) -> tuple[np.ndarray, np.ndarray]:
    """RPN assignment: labels (1 pos / 0 neg / -1 ignore) and matched GT index.

    Positives are anchors with IoU >= pos_iou plus, per GT box, every anchor
    achieving that box's maximum IoU (skipped when the maximum is 0).
    """
    n = anchors_clipped.shape[0]
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if gt.shape[0] == 0:
        return np.zeros(n, dtype=np.int64), np.full(n, -1, dtype=np.int64)
    iou = box_iou(anchors_clipped, gt)
    row_max = iou.max(axis=1)
    matched = iou.argmax(axis=1)
    labels = np.full(n, -1, dtype=np.int64)
    labels[row_max < neg_iou] = 0
    col_max = iou.max(axis=0)
    is_best = (iou == col_max[None, :]) & (col_max[None, :] > 0)
    labels[is_best.any(axis=1)] = 1
    labels[row_max >= pos_iou] = 1
    return labels, matched


def detection_loss(
    raw: RawDetections, gt_boxes: np.ndarray, cfg: DetectorConfig | None = None
) -> torch.Tensor:
    """BCE over a sampled anchor set + smooth-L1 on positives' offsets.

    Negatives are chosen by highest predicted score (hard-negative mining)
    rather than at random, keeping the loss deterministic for fixed inputs;
    both terms are normalized by the sampled-anchor count.
    """
    cfg = cfg or DetectorConfig()
    labels, matched = assign_anchors(
        raw.anchors.clipped(), gt_boxes, cfg.pos_iou, cfg.neg_iou
    )
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)

    max_pos = int(cfg.sample_size * cfg.pos_fraction)
    if len(pos) > max_pos:
        pos = pos[:max_pos]
    budget = cfg.sample_size - len(pos)
    if len(neg) > budget:
        with torch.no_grad():
            neg_scores = raw.logits[torch.from_numpy(neg)].numpy()
        hard = np.lexsort((neg, -neg_scores))[:budget]
        neg = neg[hard]

    sampled = np.concatenate([pos, neg])
    idx = torch.from_numpy(sampled)
    targets = torch.zeros(len(sampled), dtype=raw.logits.dtype)
    targets[: len(pos)] = 1.0
    cls_loss = nn.functional.binary_cross_entropy_with_logits(
        raw.logits[idx], targets, reduction="mean"
    )
    if len(pos) == 0:
        return cls_loss
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    reg_targets = encode_boxes(raw.anchors.boxes[pos], gt[matched[pos]])
    reg_loss = nn.functional.smooth_l1_loss(
        raw.deltas[torch.from_numpy(pos)],
        torch.from_numpy(reg_targets).to(raw.deltas.dtype),
        reduction="sum",
    )
    return cls_loss + reg_loss / len(sampled)
