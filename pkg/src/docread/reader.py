"""Text recognition branch.

RoIAlign crops fixed-size region features from the shared map, a column
encoder turns them into a feature sequence, and an attention LSTM decoder
emits characters. The decoder hidden states double as the per-character
textual features consumed by the context and extraction stages, which is the
bridge that lets entity supervision reach the recognizer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .backbone import SharedFeatureMap
from .corpus.schema import EOS, PAD, SOS, Vocabulary

_MIN_EXTENT = 1e-6  # feature-space floor for degenerate boxes


@dataclass(frozen=True)
class ReaderConfig:
    roi_h: int = 32
    roi_w: int = 256
    d_r: int = 256  # encoded sequence width
    d_s: int = 256  # decoder state width
    emb_dim: int = 64
    attn_dim: int = 256
    t_max: int = 40


@dataclass
class RegionFeatures:
    data: torch.Tensor  # (h', w', d)
    box: tuple[float, float, float, float]
    degenerate: bool = False


@dataclass
class EncodedSequence:
    data: torch.Tensor  # (l, d_r)


@dataclass
class DecoderOutput:
    logits: torch.Tensor  # (T, |vocab|)
    states: torch.Tensor  # (T, d_s), the textual features
    attention: torch.Tensor  # (T, l)
    text: str


def roi_align_batch(
    fmap: SharedFeatureMap, boxes: np.ndarray, out_h: int, out_w: int
) -> tuple[torch.Tensor, np.ndarray]:
    """Crop every box to (out_h, out_w, d); differentiable w.r.t. fmap.data.

    Boxes are pixel coordinates, divided by the stride without rounding. Each
    output cell averages 4 bilinear samples at its 2x2 regular sub-points;
    sample coordinates clamp to the map border. Returns the stacked crops and
    a per-box flag marking boxes whose feature-space extent had to be clamped
    up to a minimum.
    """
    data = fmap.data
    h, w, d = data.shape
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4) / float(fmap.stride)
    m = boxes.shape[0]
    if m == 0:
        return data.new_zeros((0, out_h, out_w, d)), np.zeros(0, dtype=bool)

    x0, y0 = boxes[:, 0], boxes[:, 1]
    x1, y1 = boxes[:, 2], boxes[:, 3]
    degenerate = (x1 - x0 < _MIN_EXTENT) | (y1 - y0 < _MIN_EXTENT)
    x1 = np.maximum(x1, x0 + _MIN_EXTENT)
    y1 = np.maximum(y1, y0 + _MIN_EXTENT)

    cw = (x1 - x0) / out_w
    ch = (y1 - y0) / out_h
    # Sample points (m, out_h, out_w, 2, 2), then clamped grid coordinates.
    sub = np.array([0.25, 0.75])
    py = y0[:, None, None] + (np.arange(out_h)[None, :, None] + sub[None, None, :]) * ch[:, None, None]
    px = x0[:, None, None] + (np.arange(out_w)[None, :, None] + sub[None, None, :]) * cw[:, None, None]
    gy = np.clip(py - 0.5, 0.0, h - 1.0)  # (m, out_h, 2)
    gx = np.clip(px - 0.5, 0.0, w - 1.0)  # (m, out_w, 2)

    y_lo = np.floor(gy).astype(np.int64)
    x_lo = np.floor(gx).astype(np.int64)
    y_hi = np.minimum(y_lo + 1, h - 1)
    x_hi = np.minimum(x_lo + 1, w - 1)
    fy = gy - y_lo
    fx = gx - x_lo

    # Broadcast row/column sample axes into a full (m, out_h, out_w, 2, 2) grid.
    def rows(a):
        return a[:, :, None, :, None]

    def cols(a):
        return a[:, None, :, None, :]

    shape = (m, out_h, out_w, 2, 2)
    ylo = np.broadcast_to(rows(y_lo), shape)
    yhi = np.broadcast_to(rows(y_hi), shape)
    xlo = np.broadcast_to(cols(x_lo), shape)
    xhi = np.broadcast_to(cols(x_hi), shape)
    wy = np.broadcast_to(rows(fy), shape)
    wx = np.broadcast_to(cols(fx), shape)

    flat = data.reshape(h * w, d)

    def gather(yi, xi):
        idx = torch.from_numpy((yi * w + xi).reshape(-1))
        return flat.index_select(0, idx)

    def t(a):
        return torch.from_numpy(np.ascontiguousarray(a).reshape(-1, 1)).to(data.dtype)

    val = (
        gather(ylo, xlo) * (1 - t(wy)) * (1 - t(wx))
        + gather(ylo, xhi) * (1 - t(wy)) * t(wx)
        + gather(yhi, xlo) * t(wy) * (1 - t(wx))
        + gather(yhi, xhi) * t(wy) * t(wx)
    )
    out = val.reshape(m, out_h, out_w, 2, 2, d).mean(dim=(3, 4))
    return out, degenerate


def roi_align(
    fmap: SharedFeatureMap, box, out_h: int, out_w: int
) -> RegionFeatures:
    crops, degenerate = roi_align_batch(fmap, np.asarray(box).reshape(1, 4), out_h, out_w)
    return RegionFeatures(data=crops[0], box=tuple(float(v) for v in box), degenerate=bool(degenerate[0]))


class RegionEncoder(nn.Module):
    """Convolutional column encoder: (m, h', w', d) -> (m, l=w', d_r)."""

    def __init__(self, d_in: int, d_r: int, roi_h: int):
        super().__init__()
        self.entry = nn.Sequential(nn.Conv2d(d_in, d_r, 3, padding=1), nn.ReLU(inplace=True))
        n_pool = max(int(np.ceil(np.log2(roi_h))), 0) if roi_h > 1 else 0
        self.reduce = nn.Sequential(
            *[
                nn.Sequential(
                    nn.Conv2d(d_r, d_r, 3, stride=(2, 1), padding=1), nn.ReLU(inplace=True)
                )
                for _ in range(n_pool)
            ]
        )

    def forward(self, regions: torch.Tensor) -> torch.Tensor:
        x = regions.permute(0, 3, 1, 2)  # (m, d, h', w')
        x = self.reduce(self.entry(x))
        x = x.mean(dim=2)  # collapse any residual height
        return x.permute(0, 2, 1)  # (m, w', d_r)

    def encode_region(self, region: RegionFeatures) -> EncodedSequence:
        return EncodedSequence(data=self.forward(region.data.unsqueeze(0))[0])


class AttentionDecoder(nn.Module):
    """Per-step additive attention over the encoded sequence + LSTM cell."""

    def __init__(self, vocab: Vocabulary, cfg: ReaderConfig):
        super().__init__()
        self.vocab = vocab
        self.cfg = cfg
        self.embed = nn.Embedding(len(vocab), cfg.emb_dim)
        self.cell = nn.LSTMCell(cfg.d_r + cfg.emb_dim, cfg.d_s)
        self.state_proj = nn.Linear(cfg.d_s, cfg.attn_dim)  # W s + b
        self.feat_proj = nn.Linear(cfg.d_r, cfg.attn_dim, bias=False)  # M F_j
        self.score = nn.Linear(cfg.attn_dim, 1, bias=False)  # w^T
        self.out = nn.Linear(cfg.d_s, len(vocab))

    def attend_step(
        self, s_prev: torch.Tensor, feats: torch.Tensor, feat_proj: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """s_prev (B, d_s), feats (B, l, d_r) -> glimpse (B, d_r), weights (B, l)."""
        if feat_proj is None:
            feat_proj = self.feat_proj(feats)
        e = self.score(torch.tanh(self.state_proj(s_prev).unsqueeze(1) + feat_proj))
        alpha = torch.softmax(e.squeeze(-1), dim=1)
        glimpse = torch.bmm(alpha.unsqueeze(1), feats).squeeze(1)
        return glimpse, alpha

    def forward(
        self, feats: torch.Tensor, targets: torch.Tensor | None = None, t_max: int | None = None
    ) -> list[DecoderOutput]:
        """Decode a batch of encoded sequences (B, l, d_r).

        With targets (B, T) the pass is teacher-forced over all T steps; the
        first input is always the start token. Without targets, greedy argmax
        feedback runs for t_max steps, feeding padding once a sequence has
        emitted its end token.
        """
        b, _, _ = feats.shape
        limit = t_max if t_max is not None else self.cfg.t_max
        if targets is not None:
            if targets.shape[1] > limit:
                warnings.warn(
                    f"target length {targets.shape[1]} exceeds t_max {limit}; truncating"
                )
                targets = targets[:, :limit]
            steps = targets.shape[1]
        else:
            steps = limit

        feat_proj = self.feat_proj(feats)
        s = feats.new_zeros(b, self.cfg.d_s)
        c = feats.new_zeros(b, self.cfg.d_s)
        y_prev = torch.full((b,), SOS, dtype=torch.long)
        finished = torch.zeros(b, dtype=torch.bool)

        logits_steps, state_steps, alpha_steps, preds = [], [], [], []
        for t in range(steps):
            glimpse, alpha = self.attend_step(s, feats, feat_proj)
            inp = torch.cat([glimpse, self.embed(y_prev)], dim=1)
            s, c = self.cell(inp, (s, c))
            logits = self.out(s)
            logits_steps.append(logits)
            state_steps.append(s)
            alpha_steps.append(alpha)
            if targets is not None:
                y_prev = targets[:, t]
            else:
                pred = logits.argmax(dim=1)
                preds.append(pred)
                y_prev = torch.where(finished, torch.full_like(pred, PAD), pred)
                finished = finished | (pred == EOS)

        all_logits = torch.stack(logits_steps, dim=1)  # (B, T, V)
        all_states = torch.stack(state_steps, dim=1)  # (B, T, d_s)
        all_alpha = torch.stack(alpha_steps, dim=1)  # (B, T, l)
        if targets is not None:
            pred_idx = all_logits.argmax(dim=2).detach()
        else:
            pred_idx = torch.stack(preds, dim=1)

        outs = []
        for i in range(b):
            text = self.vocab.decode([int(v) for v in pred_idx[i]])
            outs.append(
                DecoderOutput(
                    logits=all_logits[i],
                    states=all_states[i],
                    attention=all_alpha[i],
                    text=text,
                )
            )
        return outs

    def decode_sequence(
        self, encoded: EncodedSequence, target: torch.Tensor | None = None
    ) -> DecoderOutput:
        """Single-sequence convenience wrapper."""
        targets = None if target is None else target.reshape(1, -1)
        return self.forward(encoded.data.unsqueeze(0), targets)[0]
