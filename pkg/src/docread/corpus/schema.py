"""Core document data model: entity schemas, samples and character vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import iob


@dataclass(frozen=True)
class EntitySchema:
    """Ordered entity types plus the derived IOB tag set.

    The tag set holds ``O`` at index 0 followed by B-/I- tags per entity, so
    its size is always ``2 * len(entity_names) + 1``.
    """

    entity_names: tuple[str, ...]

    def __post_init__(self):
        if not self.entity_names:
            raise ValueError("schema needs at least one entity")
        if len(set(self.entity_names)) != len(self.entity_names):
            raise ValueError("entity names must be unique")
        if any(not n for n in self.entity_names):
            raise ValueError("entity names must be non-empty")
        object.__setattr__(self, "entity_names", tuple(self.entity_names))

    @property
    def tag_set(self) -> list[str]:
        tags = [iob.OUTSIDE]
        for name in self.entity_names:
            tags.append(f"B-{name}")
            tags.append(f"I-{name}")
        return tags

    def tag_index(self, tag: str) -> int:
        try:
            return self.tag_set.index(tag)
        except ValueError:
            raise KeyError(f"tag {tag!r} not in schema {self.entity_names}") from None

    @property
    def num_tags(self) -> int:
        return 2 * len(self.entity_names) + 1


# Special token indices are fixed so checkpoints stay readable across runs.
PAD, SOS, EOS, UNK = 0, 1, 2, 3
_SPECIALS = 4


@dataclass(frozen=True)
class Vocabulary:
    """Dense character vocabulary with fixed PAD/SOS/EOS/UNK slots."""

    chars: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("duplicate characters in vocabulary")
        object.__setattr__(self, "chars", tuple(self.chars))

    @classmethod
    def from_transcripts(cls, transcripts) -> "Vocabulary":
        seen = sorted(set("".join(transcripts)))
        return cls(chars=tuple(seen))

    def __len__(self) -> int:
        return _SPECIALS + len(self.chars)

    def char_index(self, ch: str) -> int:
        try:
            return _SPECIALS + self.chars.index(ch)
        except ValueError:
            return UNK

    def index_char(self, idx: int) -> str:
        if idx < _SPECIALS:
            return ""
        return self.chars[idx - _SPECIALS]

    def encode(self, s: str, t_max: int) -> list[int]:
        """Indices of `s` truncated to t_max - 1, then EOS, padded to t_max."""
        if t_max < 2:
            raise ValueError("t_max must be at least 2")
        out = [self.char_index(c) for c in s[: t_max - 1]]
        out.append(EOS)
        out.extend([PAD] * (t_max - len(out)))
        return out

    def decode(self, indices) -> str:
        chars = []
        for idx in indices:
            idx = int(idx)
            if idx == EOS:
                break
            if idx >= _SPECIALS:
                chars.append(self.index_char(idx))
        return "".join(chars)


def encode_transcript(s: str, vocab: Vocabulary, t_max: int) -> list[int]:
    return vocab.encode(s, t_max)


def derive_schema(samples) -> EntitySchema:
    """Recover the entity set from a corpus's tag annotations.

    Names come back sorted, so the derived schema is stable across runs; a
    checkpoint still carries its own schema and wins at inference time.
    """
    names: set[str] = set()
    for sample in samples:
        for tags in sample.char_tags:
            for tag in tags:
                if tag != iob.OUTSIDE:
                    names.add(tag[2:])
    if not names:
        raise ValueError("corpus contains no entity tags")
    return EntitySchema(tuple(sorted(names)))


@dataclass
class DocumentSample:
    """One document image with full ground truth.

    image: float raster in [0, 1], shape (H, W) or (H, W, 3).
    boxes: per-text (x0, y0, x1, y1) in pixels.
    char_tags[i] has exactly one IOB tag per character of transcripts[i].
    """

    image: np.ndarray
    boxes: list[tuple[float, float, float, float]]
    transcripts: list[str]
    char_tags: list[list[str]]
    layout_kind: str = "fixed"
    text_kind: str = "structured"
    source: str = ""

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def entity_map(self) -> dict[str, list[str]]:
        """Ground-truth entities, texts merged in reading order (top, then left)."""
        order = sorted(range(len(self.boxes)), key=lambda i: (self.boxes[i][1], self.boxes[i][0]))
        merged: dict[str, list[str]] = {}
        for i in order:
            for name, values in iob.decode_entities(self.char_tags[i], self.transcripts[i]).items():
                merged.setdefault(name, []).extend(values)
        return merged


def validate_sample(sample: DocumentSample, schema: EntitySchema | None = None) -> None:
    """Check every DocumentSample invariant; raises ValueError on the first violation."""
    img = sample.image
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise ValueError(f"bad image shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("non-finite pixels")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("pixel values outside [0, 1]")
    m = len(sample.boxes)
    if not (m >= 1 and m == len(sample.transcripts) == len(sample.char_tags)):
        raise ValueError(
            f"cardinality mismatch: {m} boxes, {len(sample.transcripts)} transcripts, "
            f"{len(sample.char_tags)} tag sequences"
        )
    h, w = img.shape[:2]
    for i, (x0, y0, x1, y1) in enumerate(sample.boxes):
        if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
            raise ValueError(f"box {i} {(x0, y0, x1, y1)} invalid for {w}x{h} image")
    tag_set = set(schema.tag_set) if schema is not None else None
    for i, (text, tags) in enumerate(zip(sample.transcripts, sample.char_tags)):
        if len(text) != len(tags):
            raise ValueError(f"text {i}: {len(tags)} tags for {len(text)} characters")
        if not iob.is_well_formed(tags):
            raise ValueError(f"text {i}: malformed IOB sequence {tags}")
        if tag_set is not None:
            unknown = set(tags) - tag_set
            if unknown:
                raise ValueError(f"text {i}: tags {unknown} not in schema")
