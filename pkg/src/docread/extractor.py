"""Entity extraction head.

Fuses the visual crop and the attended textual context into one vector per
text with two learned scalar gates, concatenates that vector to every
character state, and tags characters with a BiLSTM + per-step softmax over
the IOB label space. Entity strings fall out of the tag runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .corpus.schema import EntitySchema
from .iob import decode_entities  # noqa: F401  (re-exported: tag runs -> entity map)


@dataclass(frozen=True)
class ExtractorConfig:
    d_f: int = 256  # fused context width
    hidden: int = 128  # BiLSTM units per direction


@dataclass
class TagSequenceOutput:
    logits: torch.Tensor  # (T, |tag_set|)
    tags: list[str]  # decoded tags on unmasked steps
    entities: dict[str, list[str]]


class ContextFusion(nn.Module):
    """c_bar = alpha * Linear(spatial-mean of crop) + beta * Linear(c_tilde).

    alpha and beta are free scalars starting at 1.0, shared across texts and
    saved with the model.
    """

    def __init__(self, d_visual: int, d_info: int, d_f: int):
        super().__init__()
        self.alpha = nn.Parameter(torch.ones(()))
        self.beta = nn.Parameter(torch.ones(()))
        self.visual = nn.Linear(d_visual, d_f)
        self.textual = nn.Linear(d_info, d_f)

    def forward(
        self,
        regions: torch.Tensor,
        c_tilde: torch.Tensor | None,
        use_visual: bool = True,
        use_textual: bool = True,
    ) -> torch.Tensor:
        """regions (m, h', w', d), c_tilde (m, d_info) -> (m, d_f).

        Disabled paths contribute nothing; with both off the fused context is
        a zero vector, leaving the tagger to work from character states alone.
        """
        out = regions.new_zeros((regions.shape[0], self.visual.out_features))
        if use_visual:
            out = out + self.alpha * self.visual(regions.mean(dim=(1, 2)))
        if use_textual:
            if c_tilde is None:
                raise ValueError("textual path enabled but no textual context given")
            out = out + self.beta * self.textual(c_tilde)
        return out


class EntityTagger(nn.Module):
    def __init__(self, d_s: int, d_f: int, schema: EntitySchema, cfg: ExtractorConfig | None = None):
        super().__init__()
        self.cfg = cfg or ExtractorConfig()
        self.schema = schema
        self.lstm = nn.LSTM(
            d_s + d_f, self.cfg.hidden, batch_first=True, bidirectional=True
        )
        self.proj = nn.Linear(2 * self.cfg.hidden, schema.num_tags)

    def forward(
        self, states: torch.Tensor, fused: torch.Tensor, char_mask: torch.Tensor
    ) -> torch.Tensor:
        """states (m, T, d_s), fused (m, d_f), char_mask (m, T) -> logits (m, T, K).

        The fused context is broadcast along the character axis before the
        BiLSTM; padded steps go through packing so the recurrence never sees
        them, and their logits are zeroed.
        """
        m, t, _ = states.shape
        u = torch.cat([states, fused.unsqueeze(1).expand(m, t, -1)], dim=2)
        lengths = char_mask.long().sum(dim=1).clamp(min=1)
        packed = nn.utils.rnn.pack_padded_sequence(
            u, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        hidden, _ = self.lstm(packed)
        h, _ = nn.utils.rnn.pad_packed_sequence(hidden, batch_first=True, total_length=t)
        logits = self.proj(h)
        return logits * char_mask.unsqueeze(-1).to(logits.dtype)

    def tag_text(
        self,
        states: torch.Tensor,  # (T, d_s) one text
        fused: torch.Tensor,  # (d_f,)
        char_mask: torch.Tensor,  # (T,) bool
        transcript: str,
    ) -> TagSequenceOutput:
        logits = self.forward(
            states.unsqueeze(0), fused.unsqueeze(0), char_mask.unsqueeze(0)
        )[0]
        tags = self.decode_tags(logits, char_mask)
        if len(transcript) != len(tags):
            raise ValueError(
                f"transcript length {len(transcript)} != {len(tags)} unmasked steps"
            )
        return TagSequenceOutput(
            logits=logits, tags=tags, entities=decode_entities(tags, transcript)
        )

    def decode_tags(self, logits: torch.Tensor, char_mask: torch.Tensor) -> list[str]:
        """Per-step argmax over the unmasked steps only."""
        idx = logits.detach().argmax(dim=-1)
        names = self.schema.tag_set
        return [names[int(i)] for i, keep in zip(idx, char_mask) if bool(keep)]
