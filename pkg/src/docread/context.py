"""Multimodal context block.

Turns each text's per-character decoder states into a single embedding
(character conv + masked max-pool, plus a learned position embedding of the
box), then lets all texts in a document exchange information through stacked
multi-head self-attention. The attended vectors are the textual context; the
visual context is the RoI crop itself, fused downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ContextConfig:
    d_info: int = 256
    heads: int = 8
    layers: int = 2
    kernels: tuple[int, ...] = (3, 5, 7)
    pos_bins: int = 64

    def __post_init__(self):
        if self.d_info % self.heads != 0:
            raise ValueError("d_info must be divisible by heads")
        if any(k % 2 == 0 or k < 1 for k in self.kernels):
            raise ValueError("kernel sizes must be odd and positive")
        if self.pos_bins < 1 or self.layers < 1:
            raise ValueError("pos_bins and layers must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_info // self.heads


@dataclass
class ContextFeatures:
    c_tilde: torch.Tensor  # (m, d_info); padded rows zeroed
    attention: torch.Tensor  # (layers, heads, m, m); padded rows/cols zeroed


class CharAggregator(nn.Module):
    """Character convolutions + masked max-pool over time (one branch per kernel)."""

    def __init__(self, d_in: int, cfg: ContextConfig):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv1d(d_in, d_in, k, padding=k // 2) for k in cfg.kernels
        )
        self.out_dim = d_in * len(cfg.kernels)

    def forward(
        self, states: torch.Tensor, char_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """states (m, T, d_s), char_mask (m, T) bool -> (z_hat (m, out_dim), empty (m,) bool).

        Padded steps are zeroed before the convolution so their stored values
        can never leak through the conv window; the max-pool then ignores them
        outright. Texts with no valid characters come back as zero vectors,
        flagged.
        """
        mask = char_mask.to(states.dtype).unsqueeze(-1)  # (m, T, 1)
        x = (states * mask).transpose(1, 2)  # (m, d_s, T)
        empty = ~char_mask.any(dim=1)
        pools = []
        neg = torch.where(char_mask, 0.0, NEG_INF).unsqueeze(1)  # (m, 1, T)
        for conv in self.convs:
            y = conv(x) + neg
            pooled = y.max(dim=2).values
            pools.append(pooled)
        z_hat = torch.cat(pools, dim=1)
        z_hat = torch.where(empty.unsqueeze(1), torch.zeros_like(z_hat), z_hat)
        return z_hat, empty


class TextEmbedder(nn.Module):
    """embedding = LayerNorm(Linear(z_hat) + PE(box)).

    PE quantizes the four normalized box coordinates into bins and sums four
    learned table lookups, so nearby boxes share embeddings at bin resolution.
    """

    def __init__(self, agg_dim: int, cfg: ContextConfig):
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Linear(agg_dim, cfg.d_info)
        self.pos_table = nn.Embedding(4 * cfg.pos_bins, cfg.d_info)
        self.norm = nn.LayerNorm(cfg.d_info)

    def position_bins(self, boxes: torch.Tensor, image_size: tuple[int, int]) -> torch.Tensor:
        """boxes (m, 4) pixel x0 y0 x1 y1 -> (m, 4) table indices."""
        ih, iw = image_size
        b = self.cfg.pos_bins
        norm = boxes / boxes.new_tensor([iw, ih, iw, ih])
        bins = (norm * b).long().clamp(0, b - 1)
        offsets = torch.arange(4, device=bins.device) * b
        return bins + offsets

    def forward(
        self, z_hat: torch.Tensor, boxes: torch.Tensor, image_size: tuple[int, int]
    ) -> torch.Tensor:
        pe = self.pos_table(self.position_bins(boxes, image_size)).sum(dim=1)
        return self.norm(self.proj(z_hat) + pe)


class SelfAttentionLayer(nn.Module):
    """One multi-head scaled dot-product layer with residual + LayerNorm."""

    def __init__(self, cfg: ContextConfig):
        super().__init__()
        d, n = cfg.d_info, cfg.heads
        self.heads = n
        self.d_head = cfg.d_head
        self.q = nn.Linear(d, d, bias=False)
        self.k = nn.Linear(d, d, bias=False)
        self.v = nn.Linear(d, d, bias=False)
        self.mix = nn.Linear(d, d, bias=False)  # W^info over concatenated heads
        self.norm = nn.LayerNorm(d)

    def forward(
        self, x: torch.Tensor, pad_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """x (m, d), pad_mask (m,) bool (True = real) -> (out (m, d), attn (n, m, m))."""
        m = x.shape[0]

        def split(t):
            return t.reshape(m, self.heads, self.d_head).permute(1, 0, 2)  # (n, m, d_n)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(1, 2) / math.sqrt(self.d_head)  # (n, m, m)
        scores = scores.masked_fill(~pad_mask.reshape(1, 1, m), NEG_INF)
        attn = torch.softmax(scores, dim=2)
        attn = attn * pad_mask.reshape(1, m, 1).to(attn.dtype)  # zero padded queries
        heads = attn @ v  # (n, m, d_n)
        merged = heads.permute(1, 0, 2).reshape(m, -1)
        out = self.norm(x + self.mix(merged))
        return out, attn


class TextualContext(nn.Module):
    """Stacked self-attention over the document's text embeddings."""

    def __init__(self, cfg: ContextConfig):
        super().__init__()
        self.layers = nn.ModuleList(SelfAttentionLayer(cfg) for _ in range(cfg.layers))

    def forward(self, embeddings: torch.Tensor, pad_mask: torch.Tensor) -> ContextFeatures:
        if not bool(pad_mask.any()):
            raise ValueError("textual context requires at least one real text")
        x = embeddings
        maps = []
        for layer in self.layers:
            x, attn = layer(x, pad_mask)
            maps.append(attn)
        x = x * pad_mask.unsqueeze(1).to(x.dtype)
        return ContextFeatures(c_tilde=x, attention=torch.stack(maps, dim=0))


class ContextBlock(nn.Module):
    """aggregate chars -> embed with position -> attend across texts."""

    def __init__(self, d_s: int, cfg: ContextConfig | None = None):
        super().__init__()
        self.cfg = cfg or ContextConfig()
        self.aggregator = CharAggregator(d_s, self.cfg)
        self.embedder = TextEmbedder(self.aggregator.out_dim, self.cfg)
        self.attention = TextualContext(self.cfg)

    def forward(
        self,
        states: torch.Tensor,  # (m, T, d_s)
        char_mask: torch.Tensor,  # (m, T) bool
        boxes: torch.Tensor,  # (m, 4) pixels
        image_size: tuple[int, int],
        pad_mask: torch.Tensor | None = None,  # (m,) bool, True = real text
    ) -> ContextFeatures:
        if pad_mask is None:
            pad_mask = torch.ones(states.shape[0], dtype=torch.bool)
        z_hat, _ = self.aggregator(states, char_mask)
        emb = self.embedder(z_hat, boxes, image_size)
        return self.attention(emb, pad_mask)
