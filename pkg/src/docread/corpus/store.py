"""On-disk corpus format: one PNG per sample plus a records.jsonl manifest.

Each line of records.jsonl is
``{"image", "boxes", "transcripts", "char_tags", "layout_kind", "text_kind"}``
with `image` naming the PNG relative to the split directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .schema import DocumentSample

RECORDS_NAME = "records.jsonl"


def save_corpus(samples: list[DocumentSample], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / RECORDS_NAME
    with records_path.open("w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            name = f"doc_{i:05d}.png"
            arr = np.clip(sample.image * 255.0 + 0.5, 0, 255).astype(np.uint8)
            Image.fromarray(arr).save(out / name)
            record = {
                "image": name,
                "boxes": [list(b) for b in sample.boxes],
                "transcripts": sample.transcripts,
                "char_tags": sample.char_tags,
                "layout_kind": sample.layout_kind,
                "text_kind": sample.text_kind,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return records_path


def load_corpus(corpus_dir: str | Path) -> list[DocumentSample]:
    root = Path(corpus_dir)
    records_path = root / RECORDS_NAME
    if not records_path.exists():
        raise FileNotFoundError(f"no {RECORDS_NAME} under {root}")
    samples = []
    with records_path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{records_path}:{line_no}: bad JSON ({exc})") from None
            samples.append(
                DocumentSample(
                    image=load_image(root / record["image"]),
                    boxes=[tuple(b) for b in record["boxes"]],
                    transcripts=list(record["transcripts"]),
                    char_tags=[list(t) for t in record["char_tags"]],
                    layout_kind=record.get("layout_kind", "fixed"),
                    text_kind=record.get("text_kind", "structured"),
                    source=str(root / record["image"]),
                )
            )
    return samples


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as float32 grayscale in [0, 1]."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float32) / 255.0
